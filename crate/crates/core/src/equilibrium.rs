//! Sampling the stationary chain on a bounded window.
//!
//! The chain forgets its past geometrically: a point alive `m` generations
//! ago contributes to today's window with weight `(beta p + q)^m`, displaced
//! by an `sqrt(m) sigma`-scale random walk. The sampler therefore starts
//! `horizon` generations in the past with the noise process alone and runs
//! the transition forward on windows dilated by `buffer * sqrt(m) * sigma`
//! for `m` remaining steps, clipping as the windows shrink.

use crate::chain::{step_generation, ChainParams};
use crate::error::{Error, Result};
use crate::geometry::{PointPattern, Window};
use crate::stream::RandomStream;

const LBL_SEED_NOISE: u64 = 0;
const LBL_STEP: u64 = 1;

#[derive(Debug, Clone)]
pub struct EquilibriumConfig {
    pub params: ChainParams,
    pub window: Window,
    /// Bound on the expected number of unaccounted points per unit volume:
    /// the start time is pushed back until the surviving intensity of
    /// anything older drops below this.
    pub epsilon: f64,
    pub buffer_multiplier: f64,
}

impl EquilibriumConfig {
    pub fn new(params: ChainParams, window: Window) -> Self {
        Self {
            params,
            window,
            epsilon: f64::EPSILON,
            buffer_multiplier: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate(self.window.dim())?;
        let survival = self.params.survival_factor();
        if survival >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "equilibrium requires beta*p + q < 1, got {survival}"
            )));
        }
        if self.params.noise.rho() <= 0.0 {
            return Err(Error::InvalidParameter(
                "equilibrium requires noise with positive intensity".into(),
            ));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if !(self.buffer_multiplier >= 0.0) || !self.buffer_multiplier.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "buffer multiplier must be finite and >= 0, got {}",
                self.buffer_multiplier
            )));
        }
        Ok(())
    }

    /// Stationary intensity `rho_noise / (1 - beta p - q)`.
    pub fn stationary_intensity(&self) -> f64 {
        self.params.noise.rho() / (1.0 - self.params.survival_factor())
    }
}

/// Smallest `m >= 0` such that `rho * survival^(m+1) <= epsilon`: starting
/// the chain `m` generations back leaves at most an `epsilon` intensity of
/// older points unaccounted for.
pub fn horizon(rho: f64, survival: f64, epsilon: f64) -> Result<u32> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "intensity must be positive and finite, got {rho}"
        )));
    }
    if !(0.0..1.0).contains(&survival) {
        return Err(Error::InvalidParameter(format!(
            "survival factor must lie in [0, 1), got {survival}"
        )));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    if survival == 0.0 {
        return Ok(0);
    }
    // Start a little below the analytic solution and scan upward so the
    // returned value satisfies the defining inequality exactly as written.
    let guess = ((epsilon / rho).ln() / survival.ln() - 1.0).floor();
    let mut m = if guess.is_finite() && guess > 2.0 {
        guess as u32 - 2
    } else {
        0
    };
    while rho * survival.powi(m as i32 + 1) > epsilon {
        m += 1;
        if m > 100_000_000 {
            return Err(Error::Evaluation(
                "horizon search failed to terminate".into(),
            ));
        }
    }
    Ok(m)
}

/// Draws the stationary chain restricted to `cfg.window`.
pub fn simulate_equilibrium(
    cfg: &EquilibriumConfig,
    stream: &RandomStream,
) -> Result<PointPattern> {
    cfg.validate()?;
    let survival = cfg.params.survival_factor();
    let n = horizon(cfg.stationary_intensity(), survival, cfg.epsilon)?;
    let scale = cfg.params.displacement.spread_scale();
    let dilated = |remaining: u32| {
        cfg.window
            .dilate(cfg.buffer_multiplier * (remaining as f64).sqrt() * scale)
    };

    // Oldest generation: noise alone on the widest window.
    let mut seed_stream = stream.split(LBL_SEED_NOISE);
    let mut state = cfg.params.noise.sample(&dilated(n), &mut seed_stream)?;
    let step_root = stream.split(LBL_STEP);
    for remaining in (0..n).rev() {
        let win = dilated(remaining);
        let gen_stream = step_root.split(remaining as u64);
        let trace = step_generation(&state, &cfg.params, &win, &gen_stream)?;
        state = trace.offspring.clip(&win);
        state.extend_from(&trace.retained.clip(&win));
        state.extend_from(&trace.noise);
    }
    Ok(state.clip(&cfg.window))
}

/// Descendant generations of a single ancestor, excluding the ancestor
/// itself. A retained parent reappears as its own next-generation
/// descendant, so one physical point may be counted in several generations.
#[derive(Debug, Clone)]
pub struct Family {
    pub generations: Vec<PointPattern>,
    /// True when `max_gen` was reached before extinction.
    pub truncated: bool,
}

impl Family {
    /// Total number of descendants over all generations, with multiplicity.
    pub fn total(&self) -> usize {
        self.generations.iter().map(|g| g.len()).sum()
    }
}

/// Simulates the descendant tree of `ancestor` (no noise, no windowing)
/// until extinction or `max_gen` generations.
pub fn simulate_family(
    ancestor: &[f64],
    params: &ChainParams,
    max_gen: u32,
    stream: &RandomStream,
) -> Result<Family> {
    let dim = ancestor.len();
    params.validate(dim)?;
    if params.survival_factor() >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "family simulation requires beta*p + q < 1, got {}",
            params.survival_factor()
        )));
    }
    let noiseless = ChainParams {
        noise: crate::noise::NoiseSpec::None,
        ..params.clone()
    };
    let mut current = PointPattern::new(dim);
    current.push(ancestor);
    let mut generations = Vec::new();
    let mut truncated = false;
    // Window argument is unused by the noiseless step; any window works.
    let dummy = Window::cube(dim, 1.0)?;
    for gen in 0..max_gen {
        let gen_stream = stream.split(gen as u64);
        let trace = step_generation(&current, &noiseless, &dummy, &gen_stream)?;
        current = trace.merged();
        if current.is_empty() {
            return Ok(Family {
                generations,
                truncated: false,
            });
        }
        generations.push(current.clone());
        if gen + 1 == max_gen {
            truncated = true;
        }
    }
    Ok(Family {
        generations,
        truncated,
    })
}

/// Upper bound on the expected number of descendant visits to a region of
/// volume `region_volume` by the families of all equilibrium points:
/// `|K| * rho * survival / (1 - survival)`.
pub fn family_load_bound(rho: f64, survival: f64, region_volume: f64) -> Result<f64> {
    if !(rho > 0.0) || !(region_volume > 0.0) {
        return Err(Error::InvalidParameter(
            "intensity and region volume must be positive".into(),
        ));
    }
    if !(0.0..1.0).contains(&survival) {
        return Err(Error::InvalidParameter(format!(
            "survival factor must lie in [0, 1), got {survival}"
        )));
    }
    Ok(region_volume * rho * survival / (1.0 - survival))
}
