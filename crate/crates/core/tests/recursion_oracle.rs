//! Generation-n pair correlation checked against a hand-rolled recursion.
//!
//! The library assembles generation n in closed form (every source kernel
//! pushed through the remaining transfers in one pass). The oracle below
//! re-derives the same object the slow way: a tiny term list that applies the
//! one-generation update literally, one step at a time, with no sharing of
//! kernel code. Agreement pins down the intensity-ratio bookkeeping and the
//! transfer / innovation weights independently.

mod common;

use ppchain::theory::{pcf_generation_n, pcf_step, GenerationModel, MixtureKernel, NoiseModel, PcfModelConfig};
use ppchain::RandomStream;

/// Term-list reduced pair correlation: constant + atom + weighted Gaussians.
#[derive(Clone, Debug, Default)]
struct Mini {
    constant: f64,
    dirac: f64,
    terms: Vec<(f64, f64)>, // (weight, per-coordinate variance)
}

impl Mini {
    fn mass(&self) -> f64 {
        self.dirac + self.terms.iter().map(|t| t.0).sum::<f64>()
    }

    fn eval(&self, r: f64, dim: usize) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|&(w, v)| w * common::gauss(r, v, dim))
                .sum::<f64>()
    }

    fn add(&mut self, factor: f64, other: &Mini) {
        self.constant += factor * other.constant;
        self.dirac += factor * other.dirac;
        for &(w, v) in &other.terms {
            self.terms.push((factor * w, v));
        }
    }

    fn convolve(&self, other: &Mini) -> Mini {
        assert!(
            self.constant == 0.0 || other.constant == 0.0,
            "oracle cannot convolve two offsets"
        );
        let mut out = Mini {
            constant: self.constant * other.mass() + other.constant * self.mass(),
            dirac: self.dirac * other.dirac,
            terms: Vec::new(),
        };
        for &(w, v) in &other.terms {
            out.terms.push((self.dirac * w, v));
        }
        for &(w, v) in &self.terms {
            out.terms.push((other.dirac * w, v));
        }
        for &(wa, va) in &self.terms {
            for &(wb, vb) in &other.terms {
                out.terms.push((wa * wb, va + vb));
            }
        }
        out
    }
}

struct MiniGen {
    beta: f64,
    nu: f64,
    p: f64,
    q: f64,
    sigma2: f64,
    noise_rho: f64,
    noise_kernel: Mini,
}

/// One generation of the pair-correlation recursion, written out directly:
/// survivors carry the previous kernel through the two-sided transfer, new
/// sibling and parent-offspring pairs enter with weight rho_prev / rho_new^2,
/// and independent noise contributes its own reduced correlation.
fn mini_step(prev: &Mini, rho_prev: f64, g: &MiniGen) -> (Mini, f64) {
    let bp = g.beta * g.p;
    let rho_new = rho_prev * (bp + g.q) + g.noise_rho;
    assert!(rho_new > 0.0);

    let mut transfer = Mini {
        dirac: g.q * g.q,
        ..Default::default()
    };
    if bp > 0.0 {
        transfer.terms.push((bp * bp, 2.0 * g.sigma2));
        if g.q > 0.0 {
            transfer.terms.push((2.0 * bp * g.q, g.sigma2));
        }
    }

    let c = if g.beta > 0.0 {
        (g.nu + g.beta * g.beta - g.beta) / (g.beta * g.beta)
    } else {
        0.0
    };
    let mut innovation = Mini::default();
    if bp > 0.0 {
        innovation.terms.push((c * bp * bp, 2.0 * g.sigma2));
        if g.q > 0.0 {
            innovation.terms.push((2.0 * bp * g.q, g.sigma2));
        }
    }

    let mut next = Mini::default();
    next.add((rho_prev / rho_new).powi(2), &prev.convolve(&transfer));
    next.add(rho_prev / (rho_new * rho_new), &innovation);
    next.add((g.noise_rho / rho_new).powi(2), &g.noise_kernel);
    (next, rho_new)
}

/// Draws a random chain configuration plus its oracle twin.
fn random_config(stream: &mut RandomStream, dim: usize) -> (PcfModelConfig, Vec<MiniGen>, Mini) {
    let rho0 = stream.uniform_in(20.0, 150.0);

    let mut initial = MixtureKernel::zero(dim);
    let mut mini_initial = Mini::default();
    if stream.bernoulli(0.5) {
        let a = stream.uniform_in(-0.4, 1.0);
        initial.constant = a;
        mini_initial.constant = a;
    }
    if stream.bernoulli(0.3) {
        let d = stream.uniform_in(0.0, 0.8);
        initial.dirac = d;
        mini_initial.dirac = d;
    }
    for _ in 0..(stream.index(2) + 1) {
        let w = stream.uniform_in(-0.3, 2.0);
        let v = stream.uniform_in(0.005, 0.06);
        initial.accumulate(&MixtureKernel::gaussian(dim, w, v), 1.0);
        mini_initial.terms.push((w, v));
    }

    let n_gens = 4;
    let mut gens = Vec::new();
    let mut minis = Vec::new();
    for _ in 0..n_gens {
        let beta = stream.uniform_in(0.2, 1.9);
        // Dispersion ratio c in [0.5, 6] keeps nu = (c-1) beta^2 + beta >= 0.
        let c = stream.uniform_in(0.5, 6.0);
        let nu = (c - 1.0) * beta * beta + beta;
        let p = stream.uniform_in(0.3, 1.0);
        let q = stream.uniform_in(0.0, 0.6);
        let sigma2 = stream.uniform_in(0.005, 0.05);
        let noise_rho = stream.uniform_in(5.0, 60.0);
        let mut noise_kernel = MixtureKernel::zero(dim);
        let mut mini_noise = Mini::default();
        if stream.bernoulli(0.6) {
            let w = stream.uniform_in(-0.5, 0.8);
            let v = stream.uniform_in(0.01, 0.08);
            noise_kernel.accumulate(&MixtureKernel::gaussian(dim, w, v), 1.0);
            mini_noise.terms.push((w, v));
        }
        gens.push(GenerationModel {
            beta,
            nu,
            p,
            q,
            sigma2,
            noise: NoiseModel {
                rho: noise_rho,
                kernel: noise_kernel,
            },
        });
        minis.push(MiniGen {
            beta,
            nu,
            p,
            q,
            sigma2,
            noise_rho,
            noise_kernel: mini_noise,
        });
    }

    let cfg = PcfModelConfig {
        dim,
        rho0,
        initial,
        generations: gens,
    };
    (cfg, minis, mini_initial)
}

#[test]
fn generation_kernel_matches_stepwise_oracle() {
    let radii: Vec<f64> = (0..41).map(|i| i as f64 * 0.015).collect();
    for case in 0..12u64 {
        let dim = (case % 3 + 1) as usize;
        let mut stream = RandomStream::from_seed(0x4e00 + case);
        let (cfg, minis, mini_initial) = random_config(&mut stream, dim);

        let mut mini = mini_initial;
        let mut rho = cfg.rho0;
        for n in 1..=4usize {
            let step = mini_step(&mini, rho, &minis[n - 1]);
            mini = step.0;
            rho = step.1;

            let kernel = pcf_generation_n(&cfg, n).expect("closed form");
            let rho_lib = cfg.intensities(n)[n];
            assert!(
                (rho - rho_lib).abs() <= 1e-10 * rho.max(1.0),
                "case {case} n {n}: intensity {rho} vs {rho_lib}"
            );
            assert!(
                (mini.dirac - kernel.dirac).abs() <= 1e-12,
                "case {case} n {n}: atom {} vs {}",
                mini.dirac,
                kernel.dirac
            );
            assert!(
                (mini.constant - kernel.constant).abs() <= 1e-12,
                "case {case} n {n}: offset {} vs {}",
                mini.constant,
                kernel.constant
            );
            for &r in &radii {
                let want = mini.eval(r, dim);
                let got = kernel.constant + common::gauss_part(&kernel, r);
                assert!(
                    (want - got).abs() <= 1e-10,
                    "case {case} n {n} r {r}: oracle {want} vs library {got}"
                );
            }
        }
    }
}

#[test]
fn generation_zero_returns_the_initial_kernel() {
    let mut stream = RandomStream::from_seed(0x4eff);
    let (cfg, _, mini_initial) = random_config(&mut stream, 2);
    let kernel = pcf_generation_n(&cfg, 0).expect("closed form");
    for i in 0..30 {
        let r = i as f64 * 0.02;
        let want = mini_initial.eval(r, 2);
        let got = kernel.constant + common::gauss_part(&kernel, r);
        assert!((want - got).abs() <= 1e-12, "r {r}: {want} vs {got}");
    }
}

#[test]
fn repeated_single_steps_match_the_closed_form() {
    let radii: Vec<f64> = (0..41).map(|i| i as f64 * 0.015).collect();
    for case in 0..8u64 {
        let dim = (case % 3 + 1) as usize;
        let mut stream = RandomStream::from_seed(0x5e00 + case);
        let (cfg, _, _) = random_config(&mut stream, dim);

        let mut kernel = cfg.initial.clone();
        let mut rho = cfg.rho0;
        for n in 1..=4usize {
            let (next, rho_next) = pcf_step(&kernel, rho, &cfg.generations[n - 1]).unwrap();
            kernel = next;
            rho = rho_next;

            let direct = pcf_generation_n(&cfg, n).unwrap();
            for &r in &radii {
                let a = kernel.constant + common::gauss_part(&kernel, r);
                let b = direct.constant + common::gauss_part(&direct, r);
                assert!(
                    (a - b).abs() <= 1e-10,
                    "case {case} n {n} r {r}: step {a} vs direct {b}"
                );
            }
        }
    }
}
