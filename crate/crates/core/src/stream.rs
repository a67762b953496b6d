//! Splittable deterministic random streams.
//!
//! Every stream is identified by a 128-bit key. `split(label)` derives a child
//! key by mixing the label into the parent key, so a stream is a pure function
//! of the root seed and the path of labels leading to it. Draws never alter
//! the key, which means simulations can hand out per-entity child streams
//! (per generation, per parent, per replicate) from parallel workers in any
//! order and still produce identical output for a given seed.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

const MULT_LO: u64 = 0x9E37_79B9_7F4A_7C15;
const MULT_HI: u64 = 0xC2B2_AE3D_27D4_EB4F;

/// SplitMix64 finalizer; a cheap 64-bit avalanche.
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct RandomStream {
    key: [u64; 2],
    rng: Option<ChaCha8Rng>,
}

impl RandomStream {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            key: [mix64(seed ^ MULT_LO), mix64(seed.wrapping_add(MULT_HI))],
            rng: None,
        }
    }

    /// Child stream for `label`. Independent labels give streams that are
    /// statistically independent; the derivation ignores any draws already
    /// made from `self`.
    pub fn split(&self, label: u64) -> Self {
        let a = mix64(self.key[0] ^ label.wrapping_mul(MULT_LO) ^ 0xA076_1D64_78BD_642F);
        let b = mix64(self.key[1] ^ label.wrapping_mul(MULT_HI) ^ a);
        Self {
            key: [mix64(a ^ b.rotate_left(23)), b],
            rng: None,
        }
    }

    fn rng(&mut self) -> &mut ChaCha8Rng {
        if self.rng.is_none() {
            let mut seed = [0u8; 32];
            let words = [
                self.key[0],
                self.key[1],
                mix64(self.key[0] ^ MULT_HI),
                mix64(self.key[1] ^ MULT_LO),
            ];
            for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
                chunk.copy_from_slice(&w.to_le_bytes());
            }
            self.rng = Some(ChaCha8Rng::from_seed(seed));
        }
        self.rng.as_mut().unwrap()
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng().gen::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(self.rng())
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.rng().gen_bool(p)
        }
    }

    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        let draw: f64 = Poisson::new(mean)
            .expect("positive finite Poisson mean")
            .sample(self.rng());
        draw as u64
    }

    pub fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        if shape <= 0.0 || scale <= 0.0 {
            return 0.0;
        }
        Gamma::new(shape, scale)
            .expect("positive Gamma parameters")
            .sample(self.rng())
    }

    /// Uniform integer in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        self.rng().gen_range(0..n)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng().next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng().next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng().fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng().try_fill_bytes(dest)
    }
}
