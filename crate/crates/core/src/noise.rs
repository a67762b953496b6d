//! Stationary noise processes: Poisson, Gaussian-kernel determinantal, and
//! weighted permanental (Cox) processes, with samplers and the mapping from
//! each process to its reduced pair correlation kernel.
//!
//! The non-Poisson processes share the correlation function
//! `R(x) = exp(-||x/tau||^2)`; the determinantal process has
//! `g - 1 = -R^2 / alpha` and the weighted permanental one `g - 1 = +R^2 / alpha`.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointPattern, Window};
use crate::stream::RandomStream;
use crate::theory::{MixtureKernel, NoiseModel};

/// Noise superposed at each generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseSpec {
    None,
    Poisson {
        rho: f64,
    },
    /// Determinantal process with Gaussian kernel; `alpha >= 1` copies of the
    /// `1/alpha`-intensity process are superposed.
    GaussianDpp {
        rho: f64,
        tau: f64,
        alpha: u32,
    },
    /// Weighted permanental (Cox) process driven by `two_alpha` independent
    /// Gaussian fields, so the shape parameter `alpha = two_alpha / 2` may be
    /// a half-integer.
    WeightedPermanental {
        rho: f64,
        tau: f64,
        two_alpha: u32,
    },
}

impl NoiseSpec {
    pub fn rho(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Poisson { rho }
            | NoiseSpec::GaussianDpp { rho, .. }
            | NoiseSpec::WeightedPermanental { rho, .. } => rho,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            NoiseSpec::None => Ok(()),
            NoiseSpec::Poisson { rho } => {
                if !rho.is_finite() || rho < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "Poisson noise intensity must be >= 0, got {rho}"
                    )));
                }
                Ok(())
            }
            NoiseSpec::GaussianDpp { rho, tau, alpha } => {
                check_kernel_params(rho, tau)?;
                if alpha < 1 {
                    return Err(Error::InvalidParameter(
                        "determinantal shape parameter alpha must be >= 1".into(),
                    ));
                }
                // Existence: the spectral density of one 1/alpha copy must
                // not exceed one.
                let spectral_max =
                    rho / alpha as f64 * (std::f64::consts::PI.sqrt() * tau).powi(dim as i32);
                if spectral_max > 1.0 + 1e-12 {
                    return Err(Error::Existence(format!(
                        "determinantal process does not exist: rho/alpha * (sqrt(pi) tau)^d = {spectral_max:.6} > 1; \
                         reduce tau below {:.6}",
                        (alpha as f64 / rho).powf(1.0 / dim as f64) / std::f64::consts::PI.sqrt()
                    )));
                }
                Ok(())
            }
            NoiseSpec::WeightedPermanental { rho, tau, two_alpha } => {
                check_kernel_params(rho, tau)?;
                if two_alpha < 1 {
                    return Err(Error::InvalidParameter(
                        "permanental shape parameter 2*alpha must be >= 1".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Reduced pair correlation coefficient under the default convention;
    /// `None` for noises with Poisson second-order structure.
    pub fn pcf_coefficient(&self, dim: usize) -> Result<Option<PcfCoefficient>> {
        self.pcf_coefficient_with(dim, CoefficientConvention::SquaredCorrelationMass)
    }

    /// Reduced pair correlation coefficient under an explicit normalization
    /// convention.
    pub fn pcf_coefficient_with(
        &self,
        dim: usize,
        convention: CoefficientConvention,
    ) -> Result<Option<PcfCoefficient>> {
        self.validate(dim)?;
        let (tau, alpha, sign) = match *self {
            NoiseSpec::None | NoiseSpec::Poisson { .. } => return Ok(None),
            NoiseSpec::GaussianDpp { tau, alpha, .. } => (tau, alpha as f64, -1.0),
            NoiseSpec::WeightedPermanental { tau, two_alpha, .. } => {
                (tau, two_alpha as f64 / 2.0, 1.0)
            }
        };
        let mass = match convention {
            CoefficientConvention::SquaredCorrelationMass => {
                // integral of R^2 = (pi tau^2 / 2)^{d/2}
                (std::f64::consts::PI * tau * tau / 2.0).powf(dim as f64 / 2.0)
            }
            CoefficientConvention::CorrelationMass => {
                // integral of R = (pi tau^2)^{d/2}
                (std::f64::consts::PI * tau * tau).powf(dim as f64 / 2.0)
            }
        };
        Ok(Some(PcfCoefficient {
            b: sign * mass / alpha,
            sigma2: tau * tau / 8.0,
        }))
    }

    /// Intensity and reduced pair correlation kernel for the closed-form
    /// machinery.
    pub fn pcf_model(&self, dim: usize) -> Result<NoiseModel> {
        let rho = self.rho();
        match self.pcf_coefficient(dim)? {
            None => Ok(NoiseModel {
                rho,
                kernel: MixtureKernel::zero(dim),
            }),
            Some(coeff) => Ok(NoiseModel {
                rho,
                kernel: MixtureKernel::gaussian(dim, coeff.b, 2.0 * coeff.sigma2),
            }),
        }
    }

    /// Draws one realization on `window`.
    pub fn sample(&self, window: &Window, stream: &mut RandomStream) -> Result<PointPattern> {
        self.validate(window.dim())?;
        match *self {
            NoiseSpec::None => Ok(PointPattern::new(window.dim())),
            NoiseSpec::Poisson { rho } => Ok(sample_poisson(rho, window, stream)),
            NoiseSpec::GaussianDpp { rho, tau, alpha } => {
                sample_gaussian_dpp(rho, tau, alpha, window, stream)
            }
            NoiseSpec::WeightedPermanental { rho, tau, two_alpha } => {
                sample_weighted_permanental(rho, tau, two_alpha, window, stream)
            }
        }
    }
}

fn check_kernel_params(rho: f64, tau: f64) -> Result<()> {
    if !rho.is_finite() || rho <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "noise intensity must be > 0, got {rho}"
        )));
    }
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "correlation scale tau must be > 0, got {tau}"
        )));
    }
    Ok(())
}

/// Normalization convention relating the correlation function to the
/// squared-density coefficient `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientConvention {
    /// `|b| = (integral of R^2) / alpha`, which reproduces the exact reduced
    /// pair correlation `+-R^2 / alpha`. Default.
    SquaredCorrelationMass,
    /// `|b| = (integral of R) / alpha`; kept for comparison with the looser
    /// convention found in reference tables.
    CorrelationMass,
}

/// Coefficient of the squared-density term of a noise process:
/// `g_Z - 1 = b * (f_Z conv f_Z)` with `f_Z` an isotropic Gaussian of
/// per-coordinate variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcfCoefficient {
    pub b: f64,
    pub sigma2: f64,
}

/// Homogeneous Poisson sample on `window`.
pub fn sample_poisson(rho: f64, window: &Window, stream: &mut RandomStream) -> PointPattern {
    let dim = window.dim();
    let n = stream.poisson(rho * window.volume());
    let mut out = PointPattern::with_capacity(dim, n as usize);
    let mut buf = vec![0.0; dim];
    for _ in 0..n {
        window.sample_uniform(stream, &mut buf);
        out.push(&buf);
    }
    out
}

/// Side length above which determinantal sampling splits the window into
/// independent tiles. The Gaussian correlation at the tau values admitted by
/// the existence bound is negligible at this range, so severing cross-tile
/// correlation changes the law immaterially while keeping the cubic-cost
/// projection sampler tractable.
const DPP_TILE_SIDE: f64 = 2.0;

/// Per-mode spectral weight below which Fourier modes are discarded.
const DPP_MODE_CUTOFF: f64 = 1e-12;

/// Samples the Gaussian-kernel determinantal process as a superposition of
/// `alpha` independent copies with kernel `C / alpha`, each drawn by spectral
/// Bernoulli mode selection followed by sequential projection sampling.
pub fn sample_gaussian_dpp(
    rho: f64,
    tau: f64,
    alpha: u32,
    window: &Window,
    stream: &mut RandomStream,
) -> Result<PointPattern> {
    NoiseSpec::GaussianDpp { rho, tau, alpha }.validate(window.dim())?;
    let dim = window.dim();
    let splits: Vec<usize> = (0..dim)
        .map(|a| (window.side(a) / DPP_TILE_SIDE).ceil().max(1.0) as usize)
        .collect();
    let mut out = PointPattern::new(dim);
    let mut tile_index = 0u64;
    let mut tile_counters = vec![0usize; dim];
    loop {
        let mut lower = Vec::with_capacity(dim);
        let mut upper = Vec::with_capacity(dim);
        for a in 0..dim {
            let step = window.side(a) / splits[a] as f64;
            lower.push(window.lower()[a] + tile_counters[a] as f64 * step);
            upper.push(window.lower()[a] + (tile_counters[a] + 1) as f64 * step);
        }
        let tile = Window::new(lower, upper)?;
        let tile_stream = stream.split(tile_index);
        for copy in 0..alpha {
            let mut copy_stream = tile_stream.split(copy as u64);
            let pts = sample_dpp_copy(rho / alpha as f64, tau, &tile, &mut copy_stream)?;
            out.extend_from(&pts);
        }
        tile_index += 1;
        // advance the mixed-radix tile counter
        let mut axis = 0;
        loop {
            if axis == dim {
                return Ok(out);
            }
            tile_counters[axis] += 1;
            if tile_counters[axis] < splits[axis] {
                break;
            }
            tile_counters[axis] = 0;
            axis += 1;
        }
    }
}

/// One determinantal copy with spectral density bounded by one.
fn sample_dpp_copy(
    rho: f64,
    tau: f64,
    window: &Window,
    stream: &mut RandomStream,
) -> Result<PointPattern> {
    let dim = window.dim();
    let volume = window.volume();
    let spectral_peak = rho * (std::f64::consts::PI.sqrt() * tau).powi(dim as i32);

    // Per-axis mode range: keep k while the marginal factor stays above the
    // cutoff relative to the peak.
    let log_ratio = (spectral_peak / DPP_MODE_CUTOFF).ln().max(0.0);
    let kmax: Vec<i64> = (0..dim)
        .map(|a| {
            let reach = window.side(a) / (std::f64::consts::PI * tau) * log_ratio.sqrt();
            reach.ceil() as i64
        })
        .collect();

    // Enumerate modes in lexicographic order and select each independently
    // with probability lambda_k.
    let mut selected: Vec<Vec<f64>> = Vec::new();
    let mut select_stream = stream.split(0);
    let mut k: Vec<i64> = kmax.iter().map(|&m| -m).collect();
    'modes: loop {
        let mut freq2 = 0.0;
        for a in 0..dim {
            let f = k[a] as f64 / window.side(a);
            freq2 += f * f;
        }
        let lambda = spectral_peak * (-std::f64::consts::PI.powi(2) * tau * tau * freq2).exp();
        if lambda >= DPP_MODE_CUTOFF && select_stream.bernoulli(lambda.min(1.0)) {
            let wave: Vec<f64> = (0..dim)
                .map(|a| 2.0 * std::f64::consts::PI * k[a] as f64 / window.side(a))
                .collect();
            selected.push(wave);
        }
        let mut axis = 0;
        loop {
            if axis == dim {
                break 'modes;
            }
            k[axis] += 1;
            if k[axis] <= kmax[axis] {
                break;
            }
            k[axis] = -kmax[axis];
            axis += 1;
        }
    }
    let n = selected.len();
    let mut sample_stream = stream.split(1);
    project_sample(&selected, window, volume, n, &mut sample_stream)
}

/// Sequential sampler for the projection process spanned by the selected
/// Fourier modes. The feature map has constant norm, so uniform proposals
/// with residual-norm acceptance are exact.
fn project_sample(
    waves: &[Vec<f64>],
    window: &Window,
    volume: f64,
    n: usize,
    stream: &mut RandomStream,
) -> Result<PointPattern> {
    let dim = window.dim();
    let mut out = PointPattern::with_capacity(dim, n);
    if n == 0 {
        return Ok(out);
    }
    let norm = 1.0 / volume.sqrt();
    let feature = |x: &[f64], buf: &mut Vec<Complex64>| {
        buf.clear();
        for w in waves {
            let phase: f64 = w
                .iter()
                .zip(x)
                .zip(window.lower())
                .map(|((wv, xv), lv)| wv * (xv - lv))
                .sum();
            buf.push(Complex64::new(phase.cos() * norm, phase.sin() * norm));
        }
    };

    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut x = vec![0.0; dim];
    let mut v = Vec::with_capacity(n);
    let mut proposals = 0u64;
    const MAX_PROPOSALS: u64 = 100_000_000;
    let full_norm2 = n as f64 / volume;

    while out.len() < n {
        window.sample_uniform(stream, &mut x);
        proposals += 1;
        if proposals > MAX_PROPOSALS {
            return Err(Error::Evaluation(
                "projection sampler exceeded its proposal budget".into(),
            ));
        }
        feature(&x, &mut v);
        // Project v on the span of the accepted points.
        let mut coeffs = Vec::with_capacity(basis.len());
        let mut projected2 = 0.0;
        for e in &basis {
            let c: Complex64 = e
                .iter()
                .zip(&v)
                .map(|(ev, vv)| ev.conj() * vv)
                .sum();
            projected2 += c.norm_sqr();
            coeffs.push(c);
        }
        let residual = (full_norm2 - projected2).max(0.0);
        if !stream.bernoulli(residual / full_norm2) {
            continue;
        }
        // Accepted: extend the orthonormal basis with the residual direction,
        // with one re-orthogonalization pass for stability.
        let mut w: Vec<Complex64> = v.clone();
        for (e, c) in basis.iter().zip(&coeffs) {
            for (wv, ev) in w.iter_mut().zip(e) {
                *wv -= c * ev;
            }
        }
        for e in basis.iter() {
            let c: Complex64 = e.iter().zip(&w).map(|(ev, wv)| ev.conj() * wv).sum();
            for (wv, ev) in w.iter_mut().zip(e) {
                *wv -= c * ev;
            }
        }
        let norm2: f64 = w.iter().map(|c| c.norm_sqr()).sum();
        if norm2 <= full_norm2 * 1e-24 {
            return Err(Error::Evaluation(
                "projection basis became numerically degenerate".into(),
            ));
        }
        let inv = norm2.sqrt().recip();
        for wv in &mut w {
            *wv *= inv;
        }
        basis.push(w);
        out.push(&x);
    }
    Ok(out)
}

/// Number of grid cells per correlation scale tau in the field synthesis.
const FIELD_GRID_PER_TAU: f64 = 8.0;
/// Padding, in units of tau, added around the window before periodizing.
const FIELD_PAD_TAU: f64 = 4.0;

/// Samples the weighted permanental process: the driving intensity is the sum
/// of `two_alpha` squared independent stationary Gaussian fields with
/// covariance `rho/two_alpha * exp(-||x/tau||^2)`, synthesized spectrally on a
/// padded torus grid, and the points come from thinning a dominating Poisson
/// process against the bilinear interpolation of that intensity.
///
/// Implemented for planar windows.
pub fn sample_weighted_permanental(
    rho: f64,
    tau: f64,
    two_alpha: u32,
    window: &Window,
    stream: &mut RandomStream,
) -> Result<PointPattern> {
    NoiseSpec::WeightedPermanental { rho, tau, two_alpha }.validate(window.dim())?;
    if window.dim() != 2 {
        return Err(Error::InvalidParameter(
            "weighted permanental sampling is implemented for planar windows only".into(),
        ));
    }
    let h = tau / FIELD_GRID_PER_TAU;
    debug_assert!(h <= tau / 5.0);
    let pad = FIELD_PAD_TAU * tau;
    let n0 = next_smooth(((window.side(0) + 2.0 * pad) / h).ceil() as usize);
    let n1 = next_smooth(((window.side(1) + 2.0 * pad) / h).ceil() as usize);
    let total = n0 * n1;

    // Eigenvalues of the periodized covariance: DFT of the covariance row.
    let field_var = rho / two_alpha as f64;
    let mut cov: Vec<Complex64> = Vec::with_capacity(total);
    for i in 0..n0 {
        let di = (i.min(n0 - i)) as f64 * h;
        for j in 0..n1 {
            let dj = (j.min(n1 - j)) as f64 * h;
            let c = field_var * (-(di * di + dj * dj) / (tau * tau)).exp();
            cov.push(Complex64::new(c, 0.0));
        }
    }
    fft_2d(&mut cov, n0, n1, false);
    let eigen: Vec<f64> = cov.iter().map(|c| c.re.max(0.0)).collect();

    // Synthesize the fields two at a time (real and imaginary parts of one
    // complex synthesis are independent).
    let mut intensity = vec![0.0f64; total];
    let scale = (2.0 / total as f64).sqrt();
    let pairs = (two_alpha as usize + 1) / 2;
    let mut spectrum: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); total];
    for pair in 0..pairs {
        let mut field_stream = stream.split(2 + pair as u64);
        for (slot, lam) in spectrum.iter_mut().zip(&eigen) {
            let g1 = field_stream.normal();
            let g2 = field_stream.normal();
            let amp = (lam / 2.0).sqrt();
            *slot = Complex64::new(g1 * amp, g2 * amp);
        }
        fft_2d(&mut spectrum, n0, n1, true);
        let use_both = 2 * pair + 1 < two_alpha as usize;
        for (acc, c) in intensity.iter_mut().zip(&spectrum) {
            let f1 = c.re * scale;
            *acc += f1 * f1;
            if use_both {
                let f2 = c.im * scale;
                *acc += f2 * f2;
            }
        }
    }

    // Dominating Poisson process thinned against the bilinear interpolation.
    let bound = intensity.iter().cloned().fold(0.0f64, f64::max);
    let mut thin_stream = stream.split(1);
    let count = thin_stream.poisson(bound * window.volume());
    let mut out = PointPattern::with_capacity(2, count as usize / 2);
    let mut x = [0.0f64; 2];
    for _ in 0..count {
        window.sample_uniform(&mut thin_stream, &mut x);
        let u = (x[0] - window.lower()[0] + pad) / h;
        let v = (x[1] - window.lower()[1] + pad) / h;
        let (i0, fi) = (u.floor() as usize, u.fract());
        let (j0, fj) = (v.floor() as usize, v.fract());
        let i1 = (i0 + 1) % n0;
        let j1 = (j0 + 1) % n1;
        let val = intensity[i0 * n1 + j0] * (1.0 - fi) * (1.0 - fj)
            + intensity[i1 * n1 + j0] * fi * (1.0 - fj)
            + intensity[i0 * n1 + j1] * (1.0 - fi) * fj
            + intensity[i1 * n1 + j1] * fi * fj;
        if thin_stream.bernoulli(val / bound) {
            out.push(&x);
        }
    }
    Ok(out)
}

/// In-place 2-D FFT, row-major `n0 x n1`.
fn fft_2d(data: &mut [Complex64], n0: usize, n1: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(n1)
    } else {
        planner.plan_fft_forward(n1)
    };
    for row in data.chunks_exact_mut(n1) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(n0)
    } else {
        planner.plan_fft_forward(n0)
    };
    let mut col = vec![Complex64::new(0.0, 0.0); n0];
    for j in 0..n1 {
        for i in 0..n0 {
            col[i] = data[i * n1 + j];
        }
        col_fft.process(&mut col);
        for i in 0..n0 {
            data[i * n1 + j] = col[i];
        }
    }
}

/// Smallest 5-smooth number >= n (FFT-friendly sizes).
fn next_smooth(n: usize) -> usize {
    let mut m = n.max(8);
    loop {
        let mut k = m;
        for f in [2usize, 3, 5] {
            while k % f == 0 {
                k /= f;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}
