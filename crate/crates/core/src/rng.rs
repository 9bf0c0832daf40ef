//! Counter-keyed random streams.
//!
//! Every random draw in the crate is keyed by `(seed, tag, indices...)`, so
//! draws never depend on evaluation order or on how many other draws exist.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Field tags for sample synthesis and measurement noise.
pub mod tag {
    pub const VT_PLUNGER: u64 = 0x01;
    pub const VT_BARRIER: u64 = 0x02;
    pub const C_PLUNGER: u64 = 0x03;
    pub const LEVER_ARM: u64 = 0x04;
    pub const GMAX: u64 = 0x05;
    pub const BARRIER_LEVERS: u64 = 0x06;
    pub const SPURIOUS: u64 = 0x07;
    pub const NOISE: u64 = 0x10;
    pub const SAMPLE: u64 = 0x20;
    pub const RECORD: u64 = 0x21;
    pub const STUDY: u64 = 0x22;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a word sequence into a single 64-bit key.
pub fn mix(words: &[u64]) -> u64 {
    words.iter().fold(GOLDEN, |acc, &w| {
        splitmix(acc.wrapping_add(GOLDEN) ^ splitmix(w.wrapping_add(GOLDEN)))
    })
}

/// Derives a child seed, e.g. per sample or per record.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    mix(&[seed, tag, index])
}

/// A short-lived deterministic generator for one keyed slot.
pub struct Stream(ChaCha8Rng);

impl Stream {
    pub fn new(seed: u64, tag: u64, a: u64, b: u64) -> Self {
        Stream(ChaCha8Rng::seed_from_u64(mix(&[seed, tag, a, b])))
    }

    pub fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.uniform() < p
        }
    }
}
