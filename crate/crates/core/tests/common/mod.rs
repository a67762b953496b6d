//! Shared numerical helpers for the integration tests.
//!
//! The convolution oracle here deliberately avoids the closed-form algebra in
//! the library: mixtures are sampled on a grid and convolved with the FFT, so
//! agreement with `mixture_convolve` is evidence rather than tautology.

#![allow(dead_code)]

use ppchain::theory::MixtureKernel;
use ppchain::RandomStream;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Isotropic Gaussian density in `dim` dimensions, written out directly.
pub fn gauss(r: f64, sigma2: f64, dim: usize) -> f64 {
    let norm = (2.0 * std::f64::consts::PI * sigma2).powf(-(dim as f64) / 2.0);
    norm * (-r * r / (2.0 * sigma2)).exp()
}

/// Evaluates only the Gaussian components of a kernel at radius `r`.
pub fn gauss_part(kernel: &MixtureKernel, r: f64) -> f64 {
    kernel
        .components
        .iter()
        .map(|c| c.weight * gauss(r, c.variance, kernel.dim))
        .sum()
}

/// Centred grid x_i = -length/2 + i * h with h = length / n.
pub fn grid(n: usize, length: f64) -> (Vec<f64>, f64) {
    let h = length / n as f64;
    let xs = (0..n).map(|i| -length / 2.0 + i as f64 * h).collect();
    (xs, h)
}

fn fft_in_place(planner: &mut FftPlanner<f64>, data: &mut [Complex64], inverse: bool) {
    let n = data.len();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    fft.process(data);
    if inverse {
        let scale = 1.0 / n as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Continuous convolution of two sampled functions on a centred 1-d grid.
///
/// Returns the convolution evaluated on the same grid. Both inputs must have
/// decayed to negligible values near the grid edges.
pub fn fft_convolve_1d(a: &[f64], b: &[f64], h: f64) -> Vec<f64> {
    let n = a.len();
    assert_eq!(n, b.len());
    let mut planner = FftPlanner::new();
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut planner, &mut fa, false);
    fft_in_place(&mut planner, &mut fb, false);
    for (va, vb) in fa.iter_mut().zip(fb.iter()) {
        *va *= vb;
    }
    fft_in_place(&mut planner, &mut fa, true);
    // Circular index k corresponds to grid point k - n/2.
    (0..n).map(|m| h * fa[(m + n / 2) % n].re).collect()
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

fn fft2_in_place(planner: &mut FftPlanner<f64>, data: &mut [Complex64], n: usize, inverse: bool) {
    for row in data.chunks_mut(n) {
        fft_in_place(planner, row, inverse);
    }
    transpose(data, n);
    for row in data.chunks_mut(n) {
        fft_in_place(planner, row, inverse);
    }
    transpose(data, n);
}

/// Continuous convolution of two sampled functions on a centred n x n grid
/// (row-major), step `h` in each axis.
pub fn fft_convolve_2d(a: &[f64], b: &[f64], n: usize, h: f64) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n * n);
    let mut planner = FftPlanner::new();
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_in_place(&mut planner, &mut fa, n, false);
    fft2_in_place(&mut planner, &mut fb, n, false);
    for (va, vb) in fa.iter_mut().zip(fb.iter()) {
        *va *= vb;
    }
    fft2_in_place(&mut planner, &mut fa, n, true);
    let half = n / 2;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let src = ((i + half) % n) * n + ((j + half) % n);
            out[i * n + j] = h * h * fa[src].re;
        }
    }
    out
}

/// Samples the Gaussian part of a kernel on a centred 1-d grid.
pub fn sample_1d(kernel: &MixtureKernel, xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| gauss_part(kernel, x.abs())).collect()
}

/// Samples the Gaussian part of a kernel on a centred n x n grid.
pub fn sample_2d(kernel: &MixtureKernel, xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut out = vec![0.0; n * n];
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in xs.iter().enumerate() {
            out[i * n + j] = gauss_part(kernel, x.hypot(y));
        }
    }
    out
}

/// Numeric mass of the Gaussian part of a kernel via a Riemann sum.
pub fn numeric_mass(kernel: &MixtureKernel, xs: &[f64], h: f64) -> f64 {
    match kernel.dim {
        1 => sample_1d(kernel, xs).iter().sum::<f64>() * h,
        2 => sample_2d(kernel, xs).iter().sum::<f64>() * h * h,
        d => panic!("unsupported dim {d}"),
    }
}

/// Draws a random mixture kernel for the oracle.
///
/// `with_constant` controls whether a flat offset may be present; at most one
/// operand of a convolution may carry one.
pub fn random_kernel(
    stream: &mut RandomStream,
    dim: usize,
    var_lo: f64,
    var_hi: f64,
    with_constant: bool,
) -> MixtureKernel {
    let mut kernel = MixtureKernel::zero(dim);
    let n_comp = stream.index(3) + 1;
    for _ in 0..n_comp {
        let w = stream.uniform_in(-2.0, 2.0);
        let s2 = stream.uniform_in(var_lo, var_hi);
        kernel.accumulate(&MixtureKernel::gaussian(dim, w, s2), 1.0);
    }
    if stream.bernoulli(0.35) {
        kernel.dirac = stream.uniform_in(0.0, 1.5);
    }
    if with_constant && stream.bernoulli(0.4) {
        kernel.constant = stream.uniform_in(-1.0, 1.0);
    }
    kernel
}

/// Checks `mixture_convolve(a, b)` against the grid oracle.
///
/// The Dirac product is compared exactly, the constant against numerically
/// integrated masses, and the function part pointwise on |x| <= length/4.
/// Returns the largest pointwise discrepancy of the function part.
pub fn assert_convolution_matches(
    a: &MixtureKernel,
    b: &MixtureKernel,
    n: usize,
    length: f64,
    tol: f64,
) -> f64 {
    let dim = a.dim;
    let conv = ppchain::theory::mixture_convolve(a, b).expect("convolvable pair");
    let (xs, h) = grid(n, length);

    let dirac_err = (conv.dirac - a.dirac * b.dirac).abs();
    assert!(dirac_err <= 1e-12, "dirac weight off by {dirac_err}");

    let mass_a = numeric_mass(a, &xs, h) + a.dirac;
    let mass_b = numeric_mass(b, &xs, h) + b.dirac;
    let expect_const = a.constant * mass_b + b.constant * mass_a;
    let const_err = (conv.constant - expect_const).abs();
    assert!(
        const_err <= tol,
        "constant off by {const_err}: got {} want {expect_const}",
        conv.constant
    );

    let mut worst = 0.0f64;
    match dim {
        1 => {
            let ga = sample_1d(a, &xs);
            let gb = sample_1d(b, &xs);
            let num = fft_convolve_1d(&ga, &gb, h);
            for (i, &x) in xs.iter().enumerate() {
                if x.abs() > length / 4.0 {
                    continue;
                }
                let numeric = num[i] + a.dirac * gb[i] + b.dirac * ga[i];
                let symbolic = gauss_part(&conv, x.abs());
                worst = worst.max((numeric - symbolic).abs());
            }
        }
        2 => {
            let ga = sample_2d(a, &xs);
            let gb = sample_2d(b, &xs);
            let num = fft_convolve_2d(&ga, &gb, n, h);
            for (i, &x) in xs.iter().enumerate() {
                if x.abs() > length / 4.0 {
                    continue;
                }
                for (j, &y) in xs.iter().enumerate() {
                    if y.abs() > length / 4.0 {
                        continue;
                    }
                    let idx = i * n + j;
                    let numeric = num[idx] + a.dirac * gb[idx] + b.dirac * ga[idx];
                    let symbolic = gauss_part(&conv, x.hypot(y));
                    worst = worst.max((numeric - symbolic).abs());
                }
            }
        }
        d => panic!("unsupported dim {d}"),
    }
    assert!(worst <= tol, "function part off by {worst}");
    worst
}
