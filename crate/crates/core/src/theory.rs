//! Closed-form reduced pair correlation functions.
//!
//! For chains built from isotropic Gaussian displacements and noise whose
//! reduced pair correlation `g - 1` is itself a Gaussian mixture, every
//! generation has `g - 1` of the form
//!
//! ```text
//! g(r) - 1 = constant + dirac * delta_0(r) + sum_j w_j * phi(r; s_j^2)
//! ```
//!
//! where `phi(.; s^2)` is the isotropic normal density with per-coordinate
//! variance `s^2`. [`MixtureKernel`] stores that representation and
//! [`mixture_convolve`] implements the closed convolution algebra on it, so
//! the n-generation formulas below stay exact (no gridding) for any n.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One isotropic Gaussian density term: `weight * phi(r; variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussComponent {
    pub weight: f64,
    /// Per-coordinate variance of the density.
    pub variance: f64,
}

/// Gaussian mixture representation of a reduced pair correlation function
/// `g - 1`, plus an optional constant offset and an atom at the origin.
///
/// The atom (`dirac`) never survives in the pair correlation function of a
/// simple point process; it appears in intermediate per-generation transfer
/// kernels where retention contributes `q^2 * delta_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureKernel {
    pub constant: f64,
    pub dirac: f64,
    pub components: Vec<GaussComponent>,
    pub dim: usize,
}

/// Relative variance gap below which two Gaussian components are merged.
const VARIANCE_MERGE_REL: f64 = 1e-9;

impl MixtureKernel {
    pub fn zero(dim: usize) -> Self {
        assert!(dim > 0, "kernel dimension must be positive");
        Self {
            constant: 0.0,
            dirac: 0.0,
            components: Vec::new(),
            dim,
        }
    }

    pub fn delta(dim: usize, weight: f64) -> Self {
        let mut k = Self::zero(dim);
        k.dirac = weight;
        k
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        let mut k = Self::zero(dim);
        k.constant = value;
        k
    }

    pub fn gaussian(dim: usize, weight: f64, variance: f64) -> Self {
        assert!(variance > 0.0, "component variance must be positive");
        let mut k = Self::zero(dim);
        k.components.push(GaussComponent { weight, variance });
        k
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("kernel dimension is zero".into()));
        }
        let finite = self.constant.is_finite()
            && self.dirac.is_finite()
            && self
                .components
                .iter()
                .all(|c| c.weight.is_finite() && c.variance.is_finite() && c.variance > 0.0);
        if !finite {
            return Err(Error::InvalidParameter(
                "kernel terms must be finite with positive variances".into(),
            ));
        }
        Ok(())
    }

    /// Adds `factor * other` term by term.
    pub fn accumulate(&mut self, other: &MixtureKernel, factor: f64) {
        assert_eq!(self.dim, other.dim, "kernel dimensions differ");
        self.constant += factor * other.constant;
        self.dirac += factor * other.dirac;
        self.components.extend(
            other
                .components
                .iter()
                .map(|c| GaussComponent {
                    weight: factor * c.weight,
                    variance: c.variance,
                }),
        );
    }

    pub fn scaled(&self, factor: f64) -> MixtureKernel {
        let mut out = MixtureKernel::zero(self.dim);
        out.accumulate(self, factor);
        out
    }

    /// Merges components with (numerically) equal variances and drops exact
    /// zeros. Lossless up to floating point addition.
    pub fn prune(&mut self) {
        if self.components.is_empty() {
            return;
        }
        self.components
            .sort_by(|a, b| a.variance.partial_cmp(&b.variance).unwrap());
        let mut merged: Vec<GaussComponent> = Vec::with_capacity(self.components.len());
        for c in self.components.drain(..) {
            match merged.last_mut() {
                Some(last)
                    if (c.variance - last.variance).abs()
                        <= VARIANCE_MERGE_REL * c.variance.max(last.variance) =>
                {
                    last.weight += c.weight;
                }
                _ => merged.push(c),
            }
        }
        merged.retain(|c| c.weight != 0.0);
        self.components = merged;
    }

    /// Sum of the integrable mass: Gaussian weights plus the atom. The
    /// constant is excluded (its integral is infinite unless zero).
    pub fn total_weight(&self) -> f64 {
        self.dirac + self.components.iter().map(|c| c.weight).sum::<f64>()
    }

    /// Integral over the whole space; errors when a nonzero constant makes it
    /// diverge.
    pub fn integral(&self) -> Result<f64> {
        if self.constant != 0.0 {
            return Err(Error::Evaluation(
                "kernel with nonzero constant offset has no finite integral".into(),
            ));
        }
        Ok(self.total_weight())
    }

    fn abs_mass(&self) -> f64 {
        self.dirac.abs() + self.components.iter().map(|c| c.weight.abs()).sum::<f64>()
    }

    /// Pointwise value at radius `r >= 0`. The atom makes the value at the
    /// origin undefined, which is reported as an error rather than ignored.
    pub fn evaluate(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel evaluation radius must be >= 0, got {r}"
            )));
        }
        if r == 0.0 && self.dirac != 0.0 {
            return Err(Error::Evaluation(
                "kernel has an atom at the origin; the pointwise value there is undefined".into(),
            ));
        }
        let mut v = self.constant;
        for c in &self.components {
            v += c.weight * gaussian_density(r, c.variance, self.dim);
        }
        Ok(v)
    }
}

/// Isotropic normal density with per-coordinate variance `s2`, evaluated at
/// radius `r` in `dim` dimensions.
pub fn gaussian_density(r: f64, s2: f64, dim: usize) -> f64 {
    let norm = (2.0 * std::f64::consts::PI * s2).powi(dim as i32 / 2)
        * if dim % 2 == 1 {
            (2.0 * std::f64::consts::PI * s2).sqrt()
        } else {
            1.0
        };
    (-(r * r) / (2.0 * s2)).exp() / norm
}

/// Convolution of two mixture kernels.
///
/// Rules: Gaussians convolve by adding variances and multiplying weights;
/// the atom acts as identity; a constant convolved with an integrable kernel
/// gives the constant times that kernel's mass; two nonzero constants
/// diverge and are rejected.
pub fn mixture_convolve(a: &MixtureKernel, b: &MixtureKernel) -> Result<MixtureKernel> {
    if a.dim != b.dim {
        return Err(Error::Incompatible(format!(
            "kernel dimensions differ: {} vs {}",
            a.dim, b.dim
        )));
    }
    if a.constant != 0.0 && b.constant != 0.0 {
        return Err(Error::Incompatible(
            "convolution of two nonzero constant offsets diverges".into(),
        ));
    }
    let mut out = MixtureKernel::zero(a.dim);
    out.constant = a.constant * b.total_weight() + b.constant * a.total_weight();
    out.dirac = a.dirac * b.dirac;
    for c in &b.components {
        out.components.push(GaussComponent {
            weight: a.dirac * c.weight,
            variance: c.variance,
        });
    }
    for c in &a.components {
        out.components.push(GaussComponent {
            weight: b.dirac * c.weight,
            variance: c.variance,
        });
    }
    for ca in &a.components {
        for cb in &b.components {
            out.components.push(GaussComponent {
                weight: ca.weight * cb.weight,
                variance: ca.variance + cb.variance,
            });
        }
    }
    out.prune();
    Ok(out)
}

/// Pointwise evaluation helper mirroring [`MixtureKernel::evaluate`].
pub fn pcf_evaluate(kernel: &MixtureKernel, r: f64) -> Result<f64> {
    kernel.evaluate(r).map(|v| v + 1.0)
}

/// Noise process entering one generation: intensity and reduced pair
/// correlation kernel (`g_Z - 1`; empty for Poisson noise).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub rho: f64,
    pub kernel: MixtureKernel,
}

impl NoiseModel {
    pub fn poisson(dim: usize, rho: f64) -> Self {
        Self {
            rho,
            kernel: MixtureKernel::zero(dim),
        }
    }

    pub fn none(dim: usize) -> Self {
        Self::poisson(dim, 0.0)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !self.rho.is_finite() || self.rho < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "noise intensity must be finite and >= 0, got {}",
                self.rho
            )));
        }
        if self.kernel.dim != dim {
            return Err(Error::Incompatible(
                "noise kernel dimension does not match the model".into(),
            ));
        }
        self.kernel.validate()
    }
}

/// Parameters of one generation transition: offspring count moments,
/// Gaussian displacement variance, thinning and retention probabilities,
/// and the noise superposed afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationModel {
    pub beta: f64,
    pub nu: f64,
    pub p: f64,
    pub q: f64,
    /// Per-coordinate variance of the Gaussian displacement density.
    pub sigma2: f64,
    pub noise: NoiseModel,
}

impl GenerationModel {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "offspring mean must be >= 0, got {}",
                self.beta
            )));
        }
        if !self.nu.is_finite() || self.nu < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "offspring variance must be >= 0, got {}",
                self.nu
            )));
        }
        for (name, v) in [("thinning", self.p), ("retention", self.q)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} probability must lie in [0, 1], got {v}"
                )));
            }
        }
        if !self.sigma2.is_finite() || self.sigma2 <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "displacement variance must be > 0, got {}",
                self.sigma2
            )));
        }
        self.noise.validate(dim)
    }

    /// Mean number of points at the next generation per current point.
    pub fn survival_factor(&self) -> f64 {
        self.beta * self.p + self.q
    }

    fn dispersion_c(&self) -> f64 {
        crate::dist::cluster_dispersion_c(self.beta, self.nu)
    }

    /// Transfer kernel `(beta p f + q delta) conv (beta p f + q delta)`
    /// describing how a reduced pair correlation propagates one generation.
    fn transfer_kernel(&self, dim: usize) -> MixtureKernel {
        let bp = self.beta * self.p;
        let mut k = MixtureKernel::zero(dim);
        k.dirac = self.q * self.q;
        if bp > 0.0 {
            k.components.push(GaussComponent {
                weight: bp * bp,
                variance: 2.0 * self.sigma2,
            });
            if self.q > 0.0 {
                k.components.push(GaussComponent {
                    weight: 2.0 * bp * self.q,
                    variance: self.sigma2,
                });
            }
        }
        k
    }

    /// Kernel of pairs created within one generation: siblings of a common
    /// parent plus parent-offspring pairs under retention. Scaled by the
    /// previous intensity in the recursion.
    fn innovation_kernel(&self, dim: usize) -> MixtureKernel {
        let bp = self.beta * self.p;
        let mut k = MixtureKernel::zero(dim);
        if bp > 0.0 {
            let c = self.dispersion_c();
            if c != 0.0 {
                k.components.push(GaussComponent {
                    weight: c * bp * bp,
                    variance: 2.0 * self.sigma2,
                });
            }
            if self.q > 0.0 {
                k.components.push(GaussComponent {
                    weight: 2.0 * bp * self.q,
                    variance: self.sigma2,
                });
            }
        }
        k
    }
}

/// Full model for the pair correlation of generation `n`: the initial
/// process (intensity and reduced kernel) and one [`GenerationModel`] per
/// transition.
#[derive(Debug, Clone, PartialEq)]
pub struct PcfModelConfig {
    pub dim: usize,
    pub rho0: f64,
    /// Reduced pair correlation `g - 1` of the initial process.
    pub initial: MixtureKernel,
    pub generations: Vec<GenerationModel>,
}

impl PcfModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !self.rho0.is_finite() || self.rho0 < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "initial intensity must be >= 0, got {}",
                self.rho0
            )));
        }
        if self.initial.dim != self.dim {
            return Err(Error::Incompatible(
                "initial kernel dimension does not match the model".into(),
            ));
        }
        self.initial.validate()?;
        for g in &self.generations {
            g.validate(self.dim)?;
        }
        Ok(())
    }

    /// Intensities `rho_0, ..., rho_n` along the chain.
    pub fn intensities(&self, n: usize) -> Vec<f64> {
        let mut rho = Vec::with_capacity(n + 1);
        rho.push(self.rho0);
        for g in &self.generations[..n] {
            let prev = *rho.last().unwrap();
            rho.push(prev * g.survival_factor() + g.noise.rho);
        }
        rho
    }
}

/// Reduced pair correlation kernel of generation `n`, assembled from the
/// n-step closed form: the initial kernel and every innovation and noise
/// kernel are pushed through the remaining transfer kernels and summed with
/// intensity-ratio weights.
pub fn pcf_generation_n(cfg: &PcfModelConfig, n: usize) -> Result<MixtureKernel> {
    cfg.validate()?;
    if n > cfg.generations.len() {
        return Err(Error::InvalidParameter(format!(
            "generation {n} requested but only {} transitions specified",
            cfg.generations.len()
        )));
    }
    let rho = cfg.intensities(n);
    let rho_n = rho[n];
    if rho_n <= 0.0 {
        return Err(Error::Evaluation(format!(
            "generation {n} has intensity {rho_n}; its pair correlation is undefined"
        )));
    }

    // suffix[i] = transfer_{i+1} conv ... conv transfer_n (identity for i = n).
    let mut suffix = vec![MixtureKernel::delta(cfg.dim, 1.0); n + 1];
    for i in (0..n).rev() {
        let transfer = cfg.generations[i].transfer_kernel(cfg.dim);
        suffix[i] = mixture_convolve(&transfer, &suffix[i + 1])?;
    }

    let mut out = MixtureKernel::zero(cfg.dim);
    let init = mixture_convolve(&cfg.initial, &suffix[0])?;
    out.accumulate(&init, (rho[0] / rho_n) * (rho[0] / rho_n));
    for i in 1..=n {
        let g = &cfg.generations[i - 1];
        let innovation = g.innovation_kernel(cfg.dim);
        if !innovation.components.is_empty() {
            let pushed = mixture_convolve(&innovation, &suffix[i])?;
            out.accumulate(&pushed, rho[i - 1] / (rho_n * rho_n));
        }
        if g.noise.rho > 0.0 && !(g.noise.kernel.components.is_empty() && g.noise.kernel.constant == 0.0 && g.noise.kernel.dirac == 0.0) {
            let pushed = mixture_convolve(&g.noise.kernel, &suffix[i])?;
            out.accumulate(&pushed, (g.noise.rho / rho_n) * (g.noise.rho / rho_n));
        }
    }
    out.prune();
    Ok(out)
}

/// One-generation update of a reduced pair correlation kernel, following the
/// single-step recursion. Returns the new kernel and the new intensity.
///
/// Iterating this from the initial kernel reproduces [`pcf_generation_n`];
/// the two assemble the same algebra along different routes, which the tests
/// exploit as a cross-check.
pub fn pcf_step(
    prev_kernel: &MixtureKernel,
    prev_rho: f64,
    gen: &GenerationModel,
) -> Result<(MixtureKernel, f64)> {
    gen.validate(prev_kernel.dim)?;
    if !prev_rho.is_finite() || prev_rho < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "previous intensity must be >= 0, got {prev_rho}"
        )));
    }
    let dim = prev_kernel.dim;
    let rho_new = prev_rho * gen.survival_factor() + gen.noise.rho;
    if rho_new <= 0.0 {
        return Err(Error::Evaluation(
            "updated process has zero intensity; its pair correlation is undefined".into(),
        ));
    }
    let mut out = MixtureKernel::zero(dim);
    let transferred = mixture_convolve(prev_kernel, &gen.transfer_kernel(dim))?;
    out.accumulate(&transferred, (prev_rho / rho_new) * (prev_rho / rho_new));
    out.accumulate(&gen.innovation_kernel(dim), prev_rho / (rho_new * rho_new));
    out.accumulate(
        &gen.noise.kernel,
        (gen.noise.rho / rho_new) * (gen.noise.rho / rho_new),
    );
    out.prune();
    Ok((out, rho_new))
}

/// Time-invariant chain whose every generation uses the same transition and
/// noise. `rho` is the stationary intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryModel {
    pub dim: usize,
    pub beta: f64,
    pub nu: f64,
    pub p: f64,
    pub q: f64,
    pub sigma2: f64,
    pub noise: NoiseModel,
    pub rho: f64,
}

impl StationaryModel {
    /// Subcritical model (`beta p + q < 1`) with positive noise; the
    /// stationary intensity is implied.
    pub fn new(
        dim: usize,
        beta: f64,
        nu: f64,
        p: f64,
        q: f64,
        sigma2: f64,
        noise: NoiseModel,
    ) -> Result<Self> {
        let survival = beta * p + q;
        if survival >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "offspring survival beta*p + q = {survival} must be < 1 for a stationary chain with noise"
            )));
        }
        if noise.rho <= 0.0 {
            return Err(Error::InvalidParameter(
                "stationary chain needs noise with positive intensity".into(),
            ));
        }
        let rho = noise.rho / (1.0 - survival);
        let model = Self {
            dim,
            beta,
            nu,
            p,
            q,
            sigma2,
            noise,
            rho,
        };
        model.generation().validate(dim)?;
        Ok(model)
    }

    /// Critical noiseless model (`beta p + q = 1`), where the intensity is
    /// free and supplied explicitly.
    pub fn critical(
        dim: usize,
        beta: f64,
        nu: f64,
        p: f64,
        q: f64,
        sigma2: f64,
        rho: f64,
    ) -> Result<Self> {
        let survival = beta * p + q;
        if (survival - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "noiseless stationary chain needs beta*p + q = 1, got {survival}"
            )));
        }
        if !(rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "stationary intensity must be > 0, got {rho}"
            )));
        }
        let model = Self {
            dim,
            beta,
            nu,
            p,
            q,
            sigma2,
            noise: NoiseModel::none(dim),
            rho,
        };
        model.generation().validate(dim)?;
        Ok(model)
    }

    pub fn survival_factor(&self) -> f64 {
        self.beta * self.p + self.q
    }

    pub fn generation(&self) -> GenerationModel {
        GenerationModel {
            beta: self.beta,
            nu: self.nu,
            p: self.p,
            q: self.q,
            sigma2: self.sigma2,
            noise: self.noise.clone(),
        }
    }

    /// Chain model of length `n` with this transition at every step and an
    /// arbitrary initial process.
    pub fn chain_from(&self, rho0: f64, initial: MixtureKernel, n: usize) -> PcfModelConfig {
        PcfModelConfig {
            dim: self.dim,
            rho0,
            initial,
            generations: vec![self.generation(); n],
        }
    }

    /// Kernel of pairs created in one step, per unit stationary intensity:
    /// innovation plus noise, with their equilibrium weights.
    fn source_kernel(&self) -> MixtureKernel {
        let gen = self.generation();
        let mut base = MixtureKernel::zero(self.dim);
        base.accumulate(&gen.innovation_kernel(self.dim), 1.0 / self.rho);
        if self.noise.rho > 0.0 {
            let w = self.noise.rho / self.rho;
            base.accumulate(&self.noise.kernel, w * w);
        }
        base.prune();
        base
    }
}

/// Limit pair correlation of a stationary chain.
#[derive(Debug, Clone)]
pub enum LimitPcf {
    /// Subcritical case: a finite mixture, truncated so the neglected mass is
    /// below the requested tolerance.
    Mixture(MixtureKernel),
    /// Critical noiseless case in dimension >= 3: the mixture series does not
    /// terminate, so the kernel is only available pointwise.
    Evaluator(ClusterSeriesPcf),
}

/// Reduced pair correlation of the stationary chain.
///
/// Subcritical chains (`beta p + q < 1` with noise) get a finite mixture:
/// the one-step source kernel convolved with the geometric series of
/// two-sided transfer kernels. The series term for backward distance `i`
/// carries total mass `(beta p + q)^{2i}`, which bounds the truncation error.
///
/// Critical noiseless chains (`beta p + q = 1`) have a convergent series only
/// for `dim >= 3`; there a pointwise evaluator is returned. For `dim <= 2`
/// the series diverges and an error is raised.
pub fn pcf_limit(model: &StationaryModel, tol: f64) -> Result<LimitPcf> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "truncation tolerance must be positive and finite, got {tol}"
        )));
    }
    let survival = model.survival_factor();
    if model.noise.rho > 0.0 {
        if survival >= 1.0 {
            return Err(Error::InvalidParameter(
                "stationary chain with noise requires beta*p + q < 1".into(),
            ));
        }
        Ok(LimitPcf::Mixture(subcritical_limit_kernel(model, tol)?))
    } else {
        if (survival - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(
                "noiseless stationary chain requires beta*p + q = 1".into(),
            ));
        }
        if model.dim <= 2 {
            return Err(Error::Existence(format!(
                "critical noiseless limit diverges in dimension {}; it exists only for dim >= 3",
                model.dim
            )));
        }
        Ok(LimitPcf::Evaluator(ClusterSeriesPcf {
            model: model.clone(),
        }))
    }
}

fn subcritical_limit_kernel(model: &StationaryModel, tol: f64) -> Result<MixtureKernel> {
    let base = model.source_kernel();
    let base_mass = base.abs_mass();
    let kappa = model.survival_factor();
    let kappa2 = kappa * kappa;
    if base_mass == 0.0 {
        // Poisson noise and deterministic-free chain: the limit is Poisson.
        return Ok(MixtureKernel::zero(model.dim));
    }

    // Number of backward steps needed so the neglected series mass
    // base_mass * kappa^{2(terms)} / (1 - kappa^2) drops below tol.
    let terms = if kappa2 == 0.0 {
        1
    } else {
        let target = tol * (1.0 - kappa2) / base_mass;
        let t = (target.ln() / kappa2.ln()).ceil();
        if !t.is_finite() || t > 5e6 {
            return Err(Error::Evaluation(format!(
                "limit kernel needs more than {t:.0} series terms at tolerance {tol}"
            )));
        }
        (t.max(1.0)) as usize
    };

    let series = two_sided_transfer_series(model, terms);
    let mut out = mixture_convolve(&base, &series)?;
    out.prune();
    Ok(out)
}

/// Geometric series `sum_{i=0}^{terms-1}` of the i-fold two-sided transfer
/// kernel, grouped by the total number of Gaussian displacement factors:
///
/// ```text
/// sum_i sum_{m=0}^{2i} C(2i, m) q^{2i-m} (beta p)^m phi(.; m sigma^2)
/// ```
///
/// with the `m = 0` column collapsing to an atom of weight `sum_i q^{2i}`.
fn two_sided_transfer_series(model: &StationaryModel, terms: usize) -> MixtureKernel {
    let bp = model.beta * model.p;
    let q = model.q;
    let mut out = MixtureKernel::zero(model.dim);
    if bp == 0.0 {
        // Only the atom column survives.
        let q2 = q * q;
        out.dirac = if q2 == 0.0 {
            1.0
        } else {
            (1.0 - q2.powi(terms as i32)) / (1.0 - q2)
        };
        return out;
    }
    let lnfact = LnFactorial::up_to(2 * (terms - 1).max(1));
    let ln_bp = bp.ln();
    let ln_q = if q > 0.0 { q.ln() } else { f64::NEG_INFINITY };
    let mut weight_by_m = vec![0.0f64; 2 * terms - 1];
    for i in 0..terms {
        let two_i = 2 * i;
        for m in 0..=two_i {
            if q == 0.0 && m != two_i {
                continue;
            }
            let ln_coeff = lnfact.ln_choose(two_i, m)
                + if two_i == m { 0.0 } else { (two_i - m) as f64 * ln_q }
                + m as f64 * ln_bp;
            weight_by_m[m] += ln_coeff.exp();
        }
    }
    out.dirac = weight_by_m[0];
    for (m, w) in weight_by_m.iter().enumerate().skip(1) {
        if *w > 0.0 {
            out.components.push(GaussComponent {
                weight: *w,
                variance: m as f64 * model.sigma2,
            });
        }
    }
    out
}

struct LnFactorial {
    table: Vec<f64>,
}

impl LnFactorial {
    /// Cumulative log-factorials with compensated summation.
    fn up_to(n: usize) -> Self {
        let mut table = Vec::with_capacity(n + 1);
        table.push(0.0);
        let (mut sum, mut carry) = (0.0f64, 0.0f64);
        for k in 1..=n {
            let term = (k as f64).ln() - carry;
            let next = sum + term;
            carry = (next - sum) - term;
            sum = next;
            table.push(sum);
        }
        Self { table }
    }

    fn ln_choose(&self, n: usize, k: usize) -> f64 {
        self.table[n] - self.table[k] - self.table[n - k]
    }
}

/// Pointwise evaluator for the critical noiseless limit in dimension >= 3.
#[derive(Debug, Clone)]
pub struct ClusterSeriesPcf {
    model: StationaryModel,
}

impl ClusterSeriesPcf {
    pub fn dim(&self) -> usize {
        self.model.dim
    }

    /// Value of `g(r) - 1`.
    ///
    /// In the critical case `beta p + q = 1` the backward-step coefficients
    /// `C(2i, m) q^(2i-m) (beta p)^m` form the Binomial(2i, beta p) law, and
    /// the term at backward distance `i` decays only like `i^(-dim/2)`. The
    /// series is therefore summed exactly up to an index `I` and closed with
    /// the Euler-Maclaurin integral of the remaining terms, which is
    /// available in closed form through the lower incomplete gamma function.
    /// `I` is pushed until both correction-error estimates (midpoint rule and
    /// binomial-width) drop below `tol`.
    pub fn evaluate(&self, r: f64, tol: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "evaluation radius must be >= 0, got {r}"
            )));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be > 0, got {tol}"
            )));
        }
        let m = &self.model;
        let base = m.source_kernel();
        if base.components.is_empty() {
            return Ok(0.0);
        }
        let bp = m.beta * m.p;
        let q = m.q;
        let dim = m.dim;
        let sigma2 = m.sigma2;

        let term_at = |i: usize, lnfact: &LnFactorial| -> f64 {
            let two_i = 2 * i;
            if q == 0.0 {
                let mut v = 0.0;
                for c in &base.components {
                    v += c.weight
                        * gaussian_density(r, c.variance + two_i as f64 * sigma2, dim);
                }
                return v;
            }
            // Binomial(2i, bp) probabilities, scanned outward from the mode
            // until negligible.
            let mode = ((two_i as f64 + 1.0) * bp).floor().min(two_i as f64) as usize;
            let ln_pmf = |mm: usize| {
                lnfact.ln_choose(two_i, mm)
                    + mm as f64 * bp.ln()
                    + (two_i - mm) as f64 * q.ln()
            };
            let value_at = |mm: usize| -> f64 {
                let mut v = 0.0;
                for c in &base.components {
                    v += c.weight * gaussian_density(r, c.variance + mm as f64 * sigma2, dim);
                }
                v
            };
            let peak = ln_pmf(mode);
            let cutoff = peak - 45.0;
            let mut term = 0.0;
            let mut mm = mode;
            loop {
                let lp = ln_pmf(mm);
                if lp < cutoff {
                    break;
                }
                term += lp.exp() * value_at(mm);
                if mm == 0 {
                    break;
                }
                mm -= 1;
            }
            let mut mm = mode + 1;
            while mm <= two_i {
                let lp = ln_pmf(mm);
                if lp < cutoff {
                    break;
                }
                term += lp.exp() * value_at(mm);
                mm += 1;
            }
            term
        };

        // The tail integral: sum over base components of
        //   w / (2 bp sigma^2) * int_{V}^{inf} (2 pi v)^{-d/2} exp(-r^2/2v) dv
        // with V = s^2 + (2I + 1) bp sigma^2 (midpoint continuation).
        let tail_at = |i_next: usize| -> f64 {
            let mut t = 0.0;
            for c in &base.components {
                let v0 = c.variance + (2.0 * i_next as f64 - 1.0) * bp * sigma2;
                t += c.weight * gaussian_variance_tail(r, v0, dim) / (2.0 * bp * sigma2);
            }
            t
        };

        let mut lnfact = LnFactorial::up_to(256);
        let mut total = 0.0f64;
        let mut i = 0usize;
        let mut prev_term = f64::INFINITY;
        loop {
            if lnfact.table.len() <= 2 * i + 1 {
                lnfact = LnFactorial::up_to(4 * i + 2);
            }
            let term = term_at(i, &lnfact);
            total += term;
            if i >= 32 {
                let tail = tail_at(i + 1);
                // Midpoint-rule error of the continuation plus the neglected
                // binomial-width effect on the tail.
                let step_err = 0.5 * (prev_term - term).abs();
                let width_err = if q == 0.0 {
                    0.0
                } else {
                    tail.abs() * q / (bp * (i + 1) as f64)
                };
                if step_err + width_err < 0.5 * tol {
                    total += tail;
                    break;
                }
            }
            prev_term = term;
            i += 1;
            if i > 2_000_000 {
                return Err(Error::Evaluation(
                    "critical limit series failed to reach the tolerance".into(),
                ));
            }
        }
        Ok(total)
    }
}

/// `int_V^inf (2 pi v)^{-d/2} exp(-r^2 / (2v)) dv` for `d >= 3`.
fn gaussian_variance_tail(r: f64, v_lo: f64, dim: usize) -> f64 {
    let s = dim as f64 / 2.0 - 1.0;
    let norm = (2.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0);
    if r == 0.0 {
        return norm * v_lo.powf(-s) / s;
    }
    let a = r * r / 2.0;
    norm * a.powf(-s) * lower_incomplete_gamma(s, a / v_lo)
}

/// Lower incomplete gamma `int_0^x t^(s-1) e^-t dt` for `s > 0`.
fn lower_incomplete_gamma(s: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < s + 1.0 {
        // Ascending series.
        let mut sum = 1.0 / s;
        let mut term = sum;
        let mut k = 1.0;
        while term.abs() > 1e-17 * sum.abs() {
            term *= x / (s + k);
            sum += term;
            k += 1.0;
            if k > 10_000.0 {
                break;
            }
        }
        (s * x.ln() - x).exp() * sum
    } else {
        // Complement via the continued fraction for the upper function.
        let gamma_s = ln_gamma(s).exp();
        let mut b = x + 1.0 - s;
        let mut c = 1e308;
        let mut d = 1.0 / b;
        let mut h = d;
        for n in 1..400 {
            let an = -(n as f64) * (n as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < 1e-300 {
                d = 1e-300;
            }
            c = b + an / c;
            if c.abs() < 1e-300 {
                c = 1e-300;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let upper = (s * x.ln() - x).exp() * h;
        gamma_s - upper
    }
}

/// Lanczos approximation of `ln Gamma(s)` for `s > 0`.
pub(crate) fn ln_gamma(s: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = s - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, &g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Aggregation index of the stationary chain: the integral of `g_lim - 1`
/// over the whole space. Negative values indicate net regularity, positive
/// values net clustering.
pub fn gamma_index(model: &StationaryModel) -> Result<f64> {
    let survival = model.survival_factor();
    if survival >= 1.0 || model.noise.rho <= 0.0 {
        return Err(Error::InvalidParameter(
            "aggregation index requires a subcritical chain with noise".into(),
        ));
    }
    let c = crate::dist::cluster_dispersion_c(model.beta, model.nu);
    let bp = model.beta * model.p;
    let b = model.noise.kernel.integral()?;
    Ok(
        ((c * bp * bp + 2.0 * bp * model.q) / model.noise.rho + b * (1.0 - survival))
            / (1.0 + survival),
    )
}
