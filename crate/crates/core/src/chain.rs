//! The generation chain: independent clustering with thinning, parent
//! retention and superposed noise.
//!
//! One transition takes the pattern `G` to
//! `offspring(G, thinned by p)  U  retained(G, kept with prob q)  U  noise`,
//! all three parts independent given `G`.

use rayon::prelude::*;

use crate::dist::{CountDistribution, DisplacementDensity};
use crate::error::{Error, Result};
use crate::geometry::{PointPattern, Window};
use crate::noise::NoiseSpec;
use crate::stream::RandomStream;
use crate::theory::{GenerationModel, PcfModelConfig};

// Split labels inside one generation step.
const LBL_OFFSPRING: u64 = 1;
const LBL_RETAIN: u64 = 2;
const LBL_NOISE: u64 = 3;
// Per-parent sub-labels.
const LBL_COUNT: u64 = 0;
const LBL_DISPLACE: u64 = 1;
const LBL_THIN: u64 = 2;

/// Parameters of one chain transition.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainParams {
    pub count: CountDistribution,
    pub displacement: DisplacementDensity,
    pub thinning_p: f64,
    pub retention_q: f64,
    pub noise: NoiseSpec,
}

impl ChainParams {
    pub fn validate(&self, dim: usize) -> Result<()> {
        self.count.validate()?;
        self.displacement.validate()?;
        for (name, v) in [("thinning", self.thinning_p), ("retention", self.retention_q)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} probability must lie in [0, 1], got {v}"
                )));
            }
        }
        self.noise.validate(dim)
    }

    /// Expected next-generation points per current point,
    /// `beta * p + q`.
    pub fn survival_factor(&self) -> f64 {
        self.count.mean() * self.thinning_p + self.retention_q
    }

    /// Closed-form counterpart of this transition; requires a Gaussian
    /// displacement density.
    pub fn pcf_generation_model(&self, dim: usize) -> Result<GenerationModel> {
        self.validate(dim)?;
        let sigma2 = self.displacement.gaussian_sigma2().ok_or_else(|| {
            Error::Incompatible(
                "closed-form pair correlation requires a Gaussian displacement density".into(),
            )
        })?;
        Ok(GenerationModel {
            beta: self.count.mean(),
            nu: self.count.variance(),
            p: self.thinning_p,
            q: self.retention_q,
            sigma2,
            noise: self.noise.pcf_model(dim)?,
        })
    }
}

/// Output of one transition, with the three independent parts kept separate
/// so provenance-based invariants stay checkable. The union is the next
/// generation.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationTrace {
    pub offspring: PointPattern,
    pub retained: PointPattern,
    pub noise: PointPattern,
}

impl GenerationTrace {
    pub fn merged(&self) -> PointPattern {
        let mut out = self.offspring.clone();
        out.extend_from(&self.retained);
        out.extend_from(&self.noise);
        out
    }

    pub fn len(&self) -> usize {
        self.offspring.len() + self.retained.len() + self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn clip(&self, window: &Window) -> GenerationTrace {
        GenerationTrace {
            offspring: self.offspring.clip(window),
            retained: self.retained.clip(window),
            noise: self.noise.clip(window),
        }
    }
}

/// Offspring and retention decision of a single parent. Count, displacement
/// and thinning draws come from separate child streams, so the realized
/// pre-thinning cluster is invariant under changes of `p`.
fn spawn_parent(
    parent: &[f64],
    params: &ChainParams,
    parent_stream: &RandomStream,
) -> (Vec<f64>, bool) {
    let dim = parent.len();
    let n = params
        .count
        .sample(&mut parent_stream.split(LBL_COUNT));
    let mut displace = parent_stream.split(LBL_DISPLACE);
    let mut thin = parent_stream.split(LBL_THIN);
    let mut offspring = Vec::with_capacity(dim * n as usize);
    let mut buf = vec![0.0; dim];
    for _ in 0..n {
        params.displacement.sample_into(&mut displace, &mut buf);
        if thin.bernoulli(params.thinning_p) {
            offspring.extend(parent.iter().zip(&buf).map(|(a, b)| a + b));
        }
    }
    let retained = parent_stream
        .split(LBL_RETAIN)
        .bernoulli(params.retention_q);
    (offspring, retained)
}

/// One chain transition.
///
/// Offspring and retained parents are returned unclipped (the caller decides
/// the buffering); the noise is drawn on `sim_window`. Parents are processed
/// in parallel with per-parent child streams, so the result depends only on
/// the stream and not on the thread count.
pub fn step_generation(
    prev: &PointPattern,
    params: &ChainParams,
    sim_window: &Window,
    stream: &RandomStream,
) -> Result<GenerationTrace> {
    let dim = sim_window.dim();
    params.validate(dim)?;
    if prev.dim() != dim {
        return Err(Error::Incompatible(format!(
            "pattern dimension {} does not match window dimension {dim}",
            prev.dim()
        )));
    }
    let offspring_root = stream.split(LBL_OFFSPRING);
    let spawned: Vec<(Vec<f64>, bool)> = (0..prev.len())
        .into_par_iter()
        .with_min_len(64)
        .map(|i| spawn_parent(prev.point(i), params, &offspring_root.split(i as u64)))
        .collect();

    let mut offspring = PointPattern::new(dim);
    let mut retained = PointPattern::new(dim);
    for (i, (pts, keep)) in spawned.iter().enumerate() {
        for p in pts.chunks_exact(dim) {
            offspring.push(p);
        }
        if *keep {
            retained.push(prev.point(i));
        }
    }
    let mut noise_stream = stream.split(LBL_NOISE);
    let noise = params.noise.sample(sim_window, &mut noise_stream)?;
    Ok(GenerationTrace {
        offspring,
        retained,
        noise,
    })
}

/// Buffer radius needed before `remaining` more transitions: the root sum of
/// squared displacement scales, times the buffer multiplier.
fn buffer_radius(params: &[ChainParams], from: usize, buffer_multiplier: f64) -> f64 {
    let s2: f64 = params[from..]
        .iter()
        .map(|p| {
            let s = p.displacement.spread_scale();
            s * s
        })
        .sum();
    buffer_multiplier * s2.sqrt()
}

/// Window on which the caller should realize the initial pattern so that
/// generation `n` is unbiased on `target`.
pub fn initial_window(
    target: &Window,
    params: &[ChainParams],
    buffer_multiplier: f64,
) -> Window {
    target.dilate(buffer_radius(params, 0, buffer_multiplier))
}

/// Runs the chain for `params.len()` transitions on shrinking buffered
/// windows and returns one trace per generation, clipped to `target`.
///
/// Generation `i` is simulated on `target` dilated by
/// `buffer_multiplier * sqrt(sum of remaining squared displacement scales)`;
/// parents act from the previous, larger window and their offspring are
/// clipped to the current one, so boundary effects on `target` decay like the
/// Gaussian tail of the buffer multiplier.
pub fn simulate_chain(
    initial: &PointPattern,
    params: &[ChainParams],
    target: &Window,
    buffer_multiplier: f64,
    stream: &RandomStream,
) -> Result<Vec<GenerationTrace>> {
    if !(buffer_multiplier >= 0.0) || !buffer_multiplier.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "buffer multiplier must be finite and >= 0, got {buffer_multiplier}"
        )));
    }
    let n = params.len();
    let mut state = initial.clip(&initial_window(target, params, buffer_multiplier));
    let mut traces = Vec::with_capacity(n);
    for i in 1..=n {
        let win = target.dilate(buffer_radius(params, i, buffer_multiplier));
        let gen_stream = stream.split(i as u64);
        let trace = step_generation(&state, &params[i - 1], &win, &gen_stream)?;
        let clipped = GenerationTrace {
            offspring: trace.offspring.clip(&win),
            retained: trace.retained.clip(&win),
            noise: trace.noise,
        };
        state = clipped.merged();
        traces.push(clipped.clip(target));
    }
    Ok(traces)
}

/// Intensity after `n = per_gen.len()` transitions, starting from `rho0`.
/// Each entry is `(beta, p, q, rho_noise)`.
///
/// Computed by the forward recursion
/// `rho_i = rho_{i-1} (beta_i p_i + q_i) + rho_noise_i` and checked against
/// the expanded sum over noise injection times; disagreement beyond floating
/// point noise panics, since both routes must describe the same chain.
pub fn intensity_after_n(rho0: f64, per_gen: &[(f64, f64, f64, f64)]) -> f64 {
    assert!(rho0 >= 0.0, "initial intensity must be >= 0");
    let mut rho = rho0;
    for &(beta, p, q, rho_z) in per_gen {
        rho = rho * (beta * p + q) + rho_z;
    }

    // Closed form: every noise injection (the initial pattern counts as the
    // injection at time 0) decays through the later survival factors.
    let n = per_gen.len();
    let mut suffix = vec![1.0; n + 1];
    for i in (0..n).rev() {
        let (beta, p, q, _) = per_gen[i];
        suffix[i] = suffix[i + 1] * (beta * p + q);
    }
    let mut closed = rho0 * suffix[0];
    for (i, &(_, _, _, rho_z)) in per_gen.iter().enumerate() {
        closed += rho_z * suffix[i + 1];
    }
    let tol = 1e-12 * rho.abs().max(closed.abs()).max(1.0);
    assert!(
        (rho - closed).abs() <= tol,
        "intensity recursion ({rho}) and closed form ({closed}) disagree"
    );
    rho
}

/// Chain with the same transition repeated, as a closed-form model.
pub fn homogeneous_pcf_config(
    dim: usize,
    rho0: f64,
    initial: crate::theory::MixtureKernel,
    params: &ChainParams,
    n: usize,
) -> Result<PcfModelConfig> {
    let gen = params.pcf_generation_model(dim)?;
    Ok(PcfModelConfig {
        dim,
        rho0,
        initial,
        generations: vec![gen; n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseSpec;

    fn basic_params(p: f64, q: f64, noise: NoiseSpec) -> ChainParams {
        ChainParams {
            count: CountDistribution::Poisson { mean: 2.0 },
            displacement: DisplacementDensity::IsotropicGaussian { sigma2: 1e-4 },
            thinning_p: p,
            retention_q: q,
            noise,
        }
    }

    #[test]
    fn partition_is_exact() {
        let w = Window::unit_square();
        let mut s = RandomStream::from_seed(1);
        let prev = crate::noise::sample_poisson(50.0, &w, &mut s);
        let params = basic_params(0.7, 0.4, NoiseSpec::Poisson { rho: 20.0 });
        let trace = step_generation(&prev, &params, &w, &RandomStream::from_seed(2)).unwrap();
        assert_eq!(
            trace.merged().len(),
            trace.offspring.len() + trace.retained.len() + trace.noise.len()
        );
        // Retained points are a subset of the parents.
        for r in trace.retained.iter() {
            assert!(prev.iter().any(|p| p == r));
        }
    }

    #[test]
    fn thinning_leaves_cluster_draws_invariant() {
        let w = Window::unit_square();
        let mut s = RandomStream::from_seed(5);
        let prev = crate::noise::sample_poisson(40.0, &w, &mut s);
        let stream = RandomStream::from_seed(9);
        let full = step_generation(
            &prev,
            &basic_params(1.0, 0.0, NoiseSpec::None),
            &w,
            &stream,
        )
        .unwrap();
        let thinned = step_generation(
            &prev,
            &basic_params(0.55, 0.0, NoiseSpec::None),
            &w,
            &stream,
        )
        .unwrap();
        assert!(thinned.offspring.len() <= full.offspring.len());
        // Every surviving offspring exists, with identical coordinates, in
        // the unthinned run.
        for pt in thinned.offspring.iter() {
            assert!(full.offspring.iter().any(|o| o == pt));
        }
    }

    #[test]
    fn step_is_thread_count_invariant() {
        let w = Window::unit_square();
        let mut s = RandomStream::from_seed(3);
        let prev = crate::noise::sample_poisson(80.0, &w, &mut s);
        let params = basic_params(0.8, 0.3, NoiseSpec::Poisson { rho: 10.0 });
        let stream = RandomStream::from_seed(4);
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool8 = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap();
        let t1 = pool1.install(|| step_generation(&prev, &params, &w, &stream).unwrap());
        let t8 = pool8.install(|| step_generation(&prev, &params, &w, &stream).unwrap());
        assert_eq!(t1, t8);
    }

    #[test]
    fn intensity_recursion_hand_values() {
        assert!((intensity_after_n(100.0, &[]) - 100.0).abs() < 1e-12);
        let one = intensity_after_n(100.0, &[(10.0, 1.0, 0.0, 0.0)]);
        assert!((one - 1000.0).abs() < 1e-9);
        let two = intensity_after_n(70.0, &[(0.3, 1.0, 0.0, 70.0), (0.3, 1.0, 0.0, 70.0)]);
        // 70 -> 91 -> 97.3
        assert!((two - 97.3).abs() < 1e-9);
        // Fresh-noise-only chain forgets the initial intensity.
        let fresh = intensity_after_n(500.0, &[(0.0, 1.0, 0.0, 25.0)]);
        assert!((fresh - 25.0).abs() < 1e-12);
    }

    #[test]
    fn chain_rejects_bad_probability() {
        let params = basic_params(1.4, 0.0, NoiseSpec::None);
        assert!(params.validate(2).is_err());
    }

    #[test]
    fn simulate_chain_clips_to_target() {
        let params = vec![basic_params(1.0, 0.2, NoiseSpec::Poisson { rho: 30.0 }); 3];
        let target = Window::unit_square();
        let mut s = RandomStream::from_seed(12);
        let init_win = initial_window(&target, &params, 4.0);
        let initial = crate::noise::sample_poisson(60.0, &init_win, &mut s);
        let traces =
            simulate_chain(&initial, &params, &target, 4.0, &RandomStream::from_seed(13)).unwrap();
        assert_eq!(traces.len(), 3);
        for t in &traces {
            for p in t.merged().iter() {
                assert!(target.contains(p));
            }
        }
    }
}
