//! JSON experiment configuration and the built-in presets.
//!
//! The schema mirrors the library types but keeps user-facing units:
//! displacement spread is given as a standard deviation `sigma`, not a
//! variance. Unknown fields are rejected so typos fail loudly.

use ppchain::chain::ChainParams;
use ppchain::noise::NoiseSpec;
use ppchain::theory::{NoiseModel, PcfModelConfig, StationaryModel};
use ppchain::{CountDistribution, DisplacementDensity, PointPattern, RandomStream, Window};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub window: WindowConfig,
    pub model: ModelConfig,
    /// Centre process for chain runs; also the default theory variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<ProcessConfig>,
    /// Extra centre processes for which theory curves are produced.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial_variants: Vec<ProcessConfig>,
    /// Noise processes for which theory curves are produced.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub noise_variants: Vec<ProcessConfig>,
    pub run: RunConfig,
    #[serde(default = "one")]
    pub replicates: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_buffer")]
    pub buffer_multiplier: f64,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> u32 {
    1
}

fn default_buffer() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub count: CountConfig,
    pub displacement: DisplacementConfig,
    pub thinning_p: f64,
    pub retention_q: f64,
    pub noise: ProcessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CountConfig {
    Poisson { mean: f64 },
    Bernoulli { mean: f64 },
    NegBinomial { mean: f64, dispersion: f64 },
    Fixed { count: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisplacementConfig {
    IsotropicGaussian { sigma: f64 },
    UniformBall { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessConfig {
    None,
    Poisson { rho: f64 },
    GaussianDpp { rho: f64, tau: f64, alpha: u32 },
    WeightedPermanental { rho: f64, tau: f64, two_alpha: u32 },
}

impl ProcessConfig {
    pub fn stem(&self) -> &'static str {
        match self {
            ProcessConfig::None => "none",
            ProcessConfig::Poisson { .. } => "poisson",
            ProcessConfig::GaussianDpp { .. } => "gaussian_dpp",
            ProcessConfig::WeightedPermanental { .. } => "weighted_permanental",
        }
    }
}

/// One closed-form model to evaluate: a centre process and a transition.
#[derive(Debug, Clone)]
pub struct TheoryVariant {
    pub label: String,
    pub initial: ProcessConfig,
    pub params: ChainParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum RunConfig {
    Chain {
        generations: u32,
        /// Generations at which theory curves are written; defaults to the
        /// final generation.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        snapshots: Vec<u32>,
    },
    Equilibrium {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

fn default_epsilon() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Distance grid upper end; defaults to a quarter of the shortest
    /// window side.
    pub r_max: Option<f64>,
    pub r_steps: usize,
    /// Pair correlation bandwidth; defaults to 0.15 / sqrt(intensity).
    pub bandwidth: Option<f64>,
    pub summaries: Vec<SummaryKind>,
    /// Number of Poisson null simulations for `validate`.
    pub null_sims: usize,
    /// Envelope level for `validate`.
    pub level: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            r_max: None,
            r_steps: 512,
            bandwidth: None,
            summaries: vec![SummaryKind::Pcf, SummaryKind::L, SummaryKind::J],
            null_sims: 99,
            level: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryKind {
    Pcf,
    L,
    J,
}

impl SummaryKind {
    pub fn stem(self) -> &'static str {
        match self {
            SummaryKind::Pcf => "pcf",
            SummaryKind::L => "l",
            SummaryKind::J => "j",
        }
    }
}

/// Configuration problems are reported with exit code 2; everything the
/// library rejects later surfaces as exit code 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(ppchain::Error),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl From<ppchain::Error> for CliError {
    fn from(e: ppchain::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_preset(name: &str) -> CliResult<Self> {
        let Some((_, text)) = PRESETS.iter().find(|(n, _)| *n == name) else {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            return Err(CliError::Config(format!(
                "unknown preset '{name}'; available: {}",
                names.join(", ")
            )));
        };
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("preset {name}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.replicates == 0 {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        if self.window.lower.len() != self.dim || self.window.upper.len() != self.dim {
            return Err(CliError::Config(format!(
                "window bounds must have {} coordinates",
                self.dim
            )));
        }
        if let RunConfig::Chain {
            generations,
            snapshots,
        } = &self.run
        {
            if *generations == 0 {
                return Err(CliError::Config("chain runs need generations >= 1".into()));
            }
            if let Some(bad) = snapshots
                .iter()
                .find(|s| **s == 0 || **s > *generations)
            {
                return Err(CliError::Config(format!(
                    "snapshot {bad} outside 1..={generations}"
                )));
            }
        }
        if self.output.r_steps < 2 {
            return Err(CliError::Config("r_steps must be at least 2".into()));
        }
        if !(self.output.level > 0.0 && self.output.level < 1.0) {
            return Err(CliError::Config("level must be in (0, 1)".into()));
        }
        if self.output.summaries.is_empty() {
            return Err(CliError::Config("summaries must not be empty".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> CliResult<Window> {
        Ok(Window::new(
            self.window.lower.clone(),
            self.window.upper.clone(),
        )?)
    }

    pub fn chain_params(&self) -> ChainParams {
        ChainParams {
            count: match self.model.count {
                CountConfig::Poisson { mean } => CountDistribution::Poisson { mean },
                CountConfig::Bernoulli { mean } => CountDistribution::Bernoulli { mean },
                CountConfig::NegBinomial { mean, dispersion } => {
                    CountDistribution::NegBinomial { mean, dispersion }
                }
                CountConfig::Fixed { count } => CountDistribution::Fixed { count },
            },
            displacement: match self.model.displacement {
                DisplacementConfig::IsotropicGaussian { sigma } => {
                    DisplacementDensity::IsotropicGaussian {
                        sigma2: sigma * sigma,
                    }
                }
                DisplacementConfig::UniformBall { radius } => {
                    DisplacementDensity::UniformBall { radius }
                }
            },
            thinning_p: self.model.thinning_p,
            retention_q: self.model.retention_q,
            noise: process_spec(&self.model.noise),
        }
    }

    /// Theory variants: the explicit variant lists, or the single configured
    /// process. `initial_variants` swaps the centre process, `noise_variants`
    /// the noise process; configuring both is ambiguous. Labels name the
    /// varying process, with an index suffix on repeats.
    pub fn theory_variants(&self) -> CliResult<Vec<TheoryVariant>> {
        if !self.initial_variants.is_empty() && !self.noise_variants.is_empty() {
            return Err(CliError::Config(
                "initial_variants and noise_variants cannot be combined".into(),
            ));
        }
        let base = self.chain_params();
        let initial = self.initial.clone().unwrap_or(ProcessConfig::None);
        let mut out = Vec::new();
        if !self.noise_variants.is_empty() {
            for nv in &self.noise_variants {
                let mut params = base.clone();
                params.noise = process_spec(nv);
                out.push(TheoryVariant {
                    label: nv.stem().to_string(),
                    initial: initial.clone(),
                    params,
                });
            }
        } else if !self.initial_variants.is_empty() {
            for iv in &self.initial_variants {
                out.push(TheoryVariant {
                    label: iv.stem().to_string(),
                    initial: iv.clone(),
                    params: base.clone(),
                });
            }
        } else {
            let label = if matches!(initial, ProcessConfig::None) {
                self.model.noise.stem()
            } else {
                initial.stem()
            };
            out.push(TheoryVariant {
                label: label.to_string(),
                initial,
                params: base,
            });
        }
        let labels: Vec<String> = out.iter().map(|v| v.label.clone()).collect();
        for (i, v) in out.iter_mut().enumerate() {
            if labels.iter().filter(|l| **l == v.label).count() > 1 {
                let nth = labels[..=i].iter().filter(|l| **l == v.label).count();
                v.label = format!("{}_{nth}", v.label);
            }
        }
        Ok(out)
    }

    /// Distance grid for curves and summaries.
    pub fn radii(&self, window: &Window) -> Vec<f64> {
        let min_side = (0..window.dim())
            .map(|a| window.side(a))
            .fold(f64::INFINITY, f64::min);
        let r_max = self.output.r_max.unwrap_or(min_side / 4.0);
        let n = self.output.r_steps;
        (0..n)
            .map(|i| r_max * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn bandwidth(&self, intensity: f64) -> f64 {
        self.output
            .bandwidth
            .unwrap_or(0.15 / intensity.max(1e-12).sqrt())
    }
}

pub fn process_spec(p: &ProcessConfig) -> NoiseSpec {
    match *p {
        ProcessConfig::None => NoiseSpec::None,
        ProcessConfig::Poisson { rho } => NoiseSpec::Poisson { rho },
        ProcessConfig::GaussianDpp { rho, tau, alpha } => NoiseSpec::GaussianDpp { rho, tau, alpha },
        ProcessConfig::WeightedPermanental {
            rho,
            tau,
            two_alpha,
        } => NoiseSpec::WeightedPermanental {
            rho,
            tau,
            two_alpha,
        },
    }
}

/// Samples a centre process; `none` is rejected because a chain cannot start
/// from an empty deterministic state.
pub fn sample_initial(
    p: &ProcessConfig,
    window: &Window,
    stream: &mut RandomStream,
) -> CliResult<PointPattern> {
    if matches!(p, ProcessConfig::None) {
        return Err(CliError::Config(
            "chain runs need an initial process other than 'none'".into(),
        ));
    }
    Ok(process_spec(p).sample(window, stream)?)
}

/// Closed-form description (intensity and reduced-correlation kernel) of a
/// centre or noise process.
pub fn process_model(p: &ProcessConfig, dim: usize) -> CliResult<NoiseModel> {
    Ok(process_spec(p).pcf_model(dim)?)
}

pub fn stationary_from_parts(
    dim: usize,
    params: &ChainParams,
    noise: NoiseModel,
) -> ppchain::Result<StationaryModel> {
    let sigma2 = match params.displacement {
        DisplacementDensity::IsotropicGaussian { sigma2 } => sigma2,
        _ => {
            return Err(ppchain::Error::Incompatible(
                "closed-form theory requires Gaussian displacement".into(),
            ))
        }
    };
    StationaryModel::new(
        dim,
        params.count.mean(),
        params.count.variance(),
        params.thinning_p,
        params.retention_q,
        sigma2,
        noise,
    )
}

/// Theory model for `n` identical transitions from a given centre process.
pub fn finite_chain_model(
    dim: usize,
    initial: &NoiseModel,
    params: &ChainParams,
    n: usize,
) -> ppchain::Result<(PcfModelConfig, Vec<f64>)> {
    let cfg = ppchain::chain::homogeneous_pcf_config(
        dim,
        initial.rho,
        initial.kernel.clone(),
        params,
        n,
    )?;
    let rho = cfg.intensities(n);
    Ok((cfg, rho))
}

/// Built-in configurations reproducing the published experiments.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig1", FIG1),
    ("fig2-dpp-centre", FIG2_DPP),
    ("fig2-poisson-centre", FIG2_POISSON),
    ("fig2-wper-centre", FIG2_WPER),
    ("fig3", FIG3),
    ("case1-poisson", CASE1_POISSON),
    ("case1-dpp", CASE1_DPP),
    ("case1-perm", CASE1_PERM),
    ("case2-poisson", CASE2_POISSON),
    ("case2-dpp", CASE2_DPP),
    ("case2-perm", CASE2_PERM),
];

/// One offspring generation from a cluster burst: Poisson(10) clusters with
/// tight Gaussian spread, no thinning, retention, or noise; curves for the
/// three centre processes.
const FIG1: &str = r#"{
  "dim": 2,
  "window": { "lower": [0.0, 0.0], "upper": [1.0, 1.0] },
  "model": {
    "count": { "kind": "poisson", "mean": 10.0 },
    "displacement": { "kind": "isotropic_gaussian", "sigma": 0.01 },
    "thinning_p": 1.0,
    "retention_q": 0.0,
    "noise": { "kind": "none" }
  },
  "initial": { "kind": "poisson", "rho": 100.0 },
  "initial_variants": [
    { "kind": "gaussian_dpp", "rho": 100.0, "tau": 0.056418958354775624, "alpha": 1 },
    { "kind": "poisson", "rho": 100.0 },
    { "kind": "weighted_permanental", "rho": 100.0, "tau": 0.1, "two_alpha": 1 }
  ],
  "run": { "mode": "chain", "generations": 1 },
  "output": { "r_max": 0.25, "r_steps": 256 }
}"#;

const FIG2_DPP: &str = r#"{
  "dim": 2,
  "window": { "lower": [0.0, 0.0], "upper": [1.0, 1.0] },
  "model": {
    "count": { "kind": "poisson", "mean": 10.0 },
    "displacement": { "kind": "isotropic_gaussian", "sigma": 0.01 },
    "thinning_p": 1.0,
    "retention_q": 0.0,
    "noise": { "kind": "none" }
  },
  "initial": { "kind": "gaussian_dpp", "rho": 100.0, "tau": 0.056418958354775624, "alpha": 1 },
  "run": { "mode": "chain", "generations": 1 },
  "replicates": 3
}"#;

const FIG2_POISSON: &str = r#"{
  "dim": 2,
  "window": { "lower": [0.0, 0.0], "upper": [1.0, 1.0] },
  "model": {
    "count": { "kind": "poisson", "mean": 10.0 },
    "displacement": { "kind": "isotropic_gaussian", "sigma": 0.01 },
    "thinning_p": 1.0,
    "retention_q": 0.0,
    "noise": { "kind": "none" }
  },
  "initial": { "kind": "poisson", "rho": 100.0 },
  "run": { "mode": "chain", "generations": 1 },
  "replicates": 3
}"#;

const FIG2_WPER: &str = r#"{
  "dim": 2,
  "window": { "lower": [0.0, 0.0], "upper": [1.0, 1.0] },
  "model": {
    "count": { "kind": "poisson", "mean": 10.0 },
    "displacement": { "kind": "isotropic_gaussian", "sigma": 0.01 },
    "thinning_p": 1.0,
    "retention_q": 0.0,
    "noise": { "kind": "none" }
  },
  "initial": { "kind": "weighted_permanental", "rho": 100.0, "tau": 0.1, "two_alpha": 1 },
  "run": { "mode": "chain", "generations": 1 },
  "replicates": 3
}"#;

/// Convergence of the generation correlations under sustained noise: one
/// chain per noise family, curves at generations 8 and 16.
const FIG3: &str = r#"{
  "dim": 2,
  "window": { "lower": [0.0, 0.0], "upper": [1.0, 1.0] },
  "model": {
    "count": { "kind": "poisson", "mean": 0.8 },
    "displacement": { "kind": "isotropic_gaussian", "sigma": 0.1 },
    "thinning_p": 1.0,
    "retention_q": 0.0,
    "noise": { "kind": "poisson", "rho": 20.0 }
  },
  "initial": { "kind": "poisson", "rho": 100.0 },
  "noise_variants": [
    { "kind": "gaussian_dpp", "rho": 20.0, "tau": 0.126156626101008, "alpha": 1 },
    { "kind": "poisson", "rho": 20.0 },
    { "kind": "weighted_permanental", "rho": 20.0, "tau": 0.1, "two_alpha": 1 }
  ],
  "run": { "mode": "chain", "generations": 16, "snapshots": [8, 16] },
  "output": { "r_max": 0.5, "r_steps": 256 }
}"#;

const CASE1_POISSON: &str = r#"{
  "dim": 2,
  "window": { "lower": [0.0, 0.0], "upper": [1.0, 1.0] },
  "model": {
    "count": { "kind": "poisson", "mean": 0.3 },
    "displacement": { "kind": "isotropic_gaussian", "sigma": 0.1 },
    "thinning_p": 1.0,
    "retention_q": 0.0,
    "noise": { "kind": "poisson", "rho": 70.0 }
  },
  "run": { "mode": "equilibrium", "epsilon": 1e-6 },
  "output": { "null_sims": 499 }
}"#;

const CASE1_DPP: &str = r#"{
  "dim": 2,
  "window": { "lower": [0.0, 0.0], "upper": [1.0, 1.0] },
  "model": {
    "count": { "kind": "bernoulli", "mean": 0.3 },
    "displacement": { "kind": "isotropic_gaussian", "sigma": 0.1 },
    "thinning_p": 1.0,
    "retention_q": 0.0,
    "noise": { "kind": "gaussian_dpp", "rho": 70.0, "tau": 0.06743355313447354, "alpha": 1 }
  },
  "run": { "mode": "equilibrium", "epsilon": 1e-6 },
  "output": { "null_sims": 499 }
}"#;

const CASE1_PERM: &str = r#"{
  "dim": 2,
  "window": { "lower": [0.0, 0.0], "upper": [1.0, 1.0] },
  "model": {
    "count": { "kind": "neg_binomial", "mean": 0.3, "dispersion": 0.1111111111111111 },
    "displacement": { "kind": "isotropic_gaussian", "sigma": 0.1 },
    "thinning_p": 1.0,
    "retention_q": 0.0,
    "noise": { "kind": "weighted_permanental", "rho": 70.0, "tau": 1.0, "two_alpha": 1 }
  },
  "run": { "mode": "equilibrium", "epsilon": 1e-6 },
  "output": { "null_sims": 499 }
}"#;

const CASE2_POISSON: &str = r#"{
  "dim": 2,
  "window": { "lower": [0.0, 0.0], "upper": [1.0, 1.0] },
  "model": {
    "count": { "kind": "neg_binomial", "mean": 0.95, "dispersion": 0.25 },
    "displacement": { "kind": "isotropic_gaussian", "sigma": 0.01 },
    "thinning_p": 1.0,
    "retention_q": 0.0,
    "noise": { "kind": "poisson", "rho": 5.0 }
  },
  "run": { "mode": "equilibrium", "epsilon": 1e-6 },
  "output": { "null_sims": 499 }
}"#;

const CASE2_DPP: &str = r#"{
  "dim": 2,
  "window": { "lower": [0.0, 0.0], "upper": [1.0, 1.0] },
  "model": {
    "count": { "kind": "neg_binomial", "mean": 0.95, "dispersion": 0.25 },
    "displacement": { "kind": "isotropic_gaussian", "sigma": 0.01 },
    "thinning_p": 1.0,
    "retention_q": 0.0,
    "noise": { "kind": "gaussian_dpp", "rho": 5.0, "tau": 0.252313252202016, "alpha": 1 }
  },
  "run": { "mode": "equilibrium", "epsilon": 1e-6 },
  "output": { "null_sims": 499 }
}"#;

const CASE2_PERM: &str = r#"{
  "dim": 2,
  "window": { "lower": [0.0, 0.0], "upper": [1.0, 1.0] },
  "model": {
    "count": { "kind": "neg_binomial", "mean": 0.95, "dispersion": 0.25 },
    "displacement": { "kind": "isotropic_gaussian", "sigma": 0.01 },
    "thinning_p": 1.0,
    "retention_q": 0.0,
    "noise": { "kind": "weighted_permanental", "rho": 5.0, "tau": 1.0, "two_alpha": 1 }
  },
  "run": { "mode": "equilibrium", "epsilon": 1e-6 },
  "output": { "null_sims": 499 }
}"#;
