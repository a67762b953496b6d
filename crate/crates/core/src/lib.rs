//! Markov chains of spatial point processes driven by independent clustering,
//! offspring thinning, parent retention and stationary noise.
//!
//! The crate has three layers:
//!
//! * simulation of the chain, of its equilibrium distribution and of the
//!   supported noise processes ([`chain`], [`equilibrium`], [`noise`]);
//! * exact pair correlation functions of every generation and of the limit
//!   process, represented symbolically as Gaussian mixture kernels ([`theory`]);
//! * nonparametric summary statistics and global rank envelopes used to check
//!   the simulators against the closed forms ([`summaries`]).
//!
//! All randomness flows through [`stream::RandomStream`], a splittable
//! counter-keyed generator, so every simulation is reproducible from a single
//! seed independently of thread count.

pub mod chain;
pub mod dist;
pub mod equilibrium;
pub mod error;
pub mod geometry;
pub mod noise;
pub mod stream;
pub mod summaries;
pub mod theory;

pub use dist::{cluster_dispersion_c, CountDistribution, DisplacementDensity};
pub use error::{Error, Result};
pub use geometry::{PointPattern, Window};
pub use stream::RandomStream;
