//! Offspring count laws and displacement densities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::RandomStream;

/// Number of offspring spawned by one parent. Parameterized by moments, not
/// by distribution-specific constants, so the dispersion index below is
/// uniform across families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CountDistribution {
    Poisson { mean: f64 },
    /// At most one offspring; `mean` is the success probability.
    Bernoulli { mean: f64 },
    /// Negative binomial with mean `mean` and shape `dispersion` (`r`), so the
    /// variance is `mean + mean^2 / r`. Sampled as a Gamma mixture of Poissons.
    NegBinomial { mean: f64, dispersion: f64 },
    Fixed { count: u64 },
}

impl CountDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CountDistribution::Poisson { mean } => {
                if !mean.is_finite() || mean < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "Poisson count mean must be finite and >= 0, got {mean}"
                    )));
                }
            }
            CountDistribution::Bernoulli { mean } => {
                if !mean.is_finite() || !(0.0..=1.0).contains(&mean) {
                    return Err(Error::InvalidParameter(format!(
                        "Bernoulli count mean must lie in [0, 1], got {mean}"
                    )));
                }
            }
            CountDistribution::NegBinomial { mean, dispersion } => {
                if !mean.is_finite() || mean < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "negative binomial mean must be finite and >= 0, got {mean}"
                    )));
                }
                if !dispersion.is_finite() || dispersion <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "negative binomial dispersion must be finite and > 0, got {dispersion}"
                    )));
                }
            }
            CountDistribution::Fixed { .. } => {}
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            CountDistribution::Poisson { mean }
            | CountDistribution::Bernoulli { mean }
            | CountDistribution::NegBinomial { mean, .. } => mean,
            CountDistribution::Fixed { count } => count as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            CountDistribution::Poisson { mean } => mean,
            CountDistribution::Bernoulli { mean } => mean * (1.0 - mean),
            CountDistribution::NegBinomial { mean, dispersion } => {
                mean + mean * mean / dispersion
            }
            CountDistribution::Fixed { .. } => 0.0,
        }
    }

    /// Dispersion index of the squared-mean; see [`cluster_dispersion_c`].
    pub fn dispersion_c(&self) -> f64 {
        cluster_dispersion_c(self.mean(), self.variance())
    }

    pub fn sample(&self, stream: &mut RandomStream) -> u64 {
        match *self {
            CountDistribution::Poisson { mean } => stream.poisson(mean),
            CountDistribution::Bernoulli { mean } => u64::from(stream.bernoulli(mean)),
            CountDistribution::NegBinomial { mean, dispersion } => {
                if mean <= 0.0 {
                    0
                } else {
                    let lambda = stream.gamma(dispersion, mean / dispersion);
                    stream.poisson(lambda)
                }
            }
            CountDistribution::Fixed { count } => count,
        }
    }
}

/// `c = (nu + beta^2 - beta) / beta^2` for a count law with mean `beta` and
/// variance `nu`; zero when `beta = 0`. This is the factor scaling the
/// same-generation clustering term of the pair correlation function.
pub fn cluster_dispersion_c(beta: f64, nu: f64) -> f64 {
    if beta <= 0.0 {
        0.0
    } else {
        (nu + beta * beta - beta) / (beta * beta)
    }
}

/// Density of the displacement from parent to offspring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DisplacementDensity {
    /// Centred isotropic Gaussian with per-coordinate variance `sigma2`.
    IsotropicGaussian { sigma2: f64 },
    /// Uniform on the centred ball of radius `radius`.
    UniformBall { radius: f64 },
}

impl DisplacementDensity {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DisplacementDensity::IsotropicGaussian { sigma2 } => {
                if !sigma2.is_finite() || sigma2 <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "displacement variance must be finite and > 0, got {sigma2}"
                    )));
                }
            }
            DisplacementDensity::UniformBall { radius } => {
                if !radius.is_finite() || radius <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "displacement radius must be finite and > 0, got {radius}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Length scale used when sizing buffered simulation windows: the
    /// per-coordinate standard deviation for the Gaussian, the radius for the
    /// ball.
    pub fn spread_scale(&self) -> f64 {
        match *self {
            DisplacementDensity::IsotropicGaussian { sigma2 } => sigma2.sqrt(),
            DisplacementDensity::UniformBall { radius } => radius,
        }
    }

    /// Per-coordinate variance when the density is Gaussian.
    pub fn gaussian_sigma2(&self) -> Option<f64> {
        match *self {
            DisplacementDensity::IsotropicGaussian { sigma2 } => Some(sigma2),
            DisplacementDensity::UniformBall { .. } => None,
        }
    }

    /// Draws one displacement into `out`.
    pub fn sample_into(&self, stream: &mut RandomStream, out: &mut [f64]) {
        match *self {
            DisplacementDensity::IsotropicGaussian { sigma2 } => {
                let sigma = sigma2.sqrt();
                for v in out.iter_mut() {
                    *v = sigma * stream.normal();
                }
            }
            DisplacementDensity::UniformBall { radius } => {
                let d = out.len();
                loop {
                    let mut norm2 = 0.0;
                    for v in out.iter_mut() {
                        *v = stream.normal();
                        norm2 += *v * *v;
                    }
                    if norm2 > 0.0 {
                        let r = radius * stream.uniform().powf(1.0 / d as f64);
                        let scale = r / norm2.sqrt();
                        for v in out.iter_mut() {
                            *v *= scale;
                        }
                        return;
                    }
                }
            }
        }
    }
}
