//! Seeded random streams.
//!
//! Every random draw in the crate goes through [`Rng`], a ChaCha8 generator.
//! Independent streams are derived from `(seed, ids...)` by selecting the
//! ChaCha stream number, so replicate `r` of an experiment never shares
//! state with replicate `r + 1` and the two can run on different threads.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `(seed, ids)`. Equal inputs give identical sequences.
pub fn stream(seed: u64, ids: &[u64]) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut key = 0x5EED_0000_0000_0001u64;
    for &id in ids {
        key = splitmix64(key ^ splitmix64(id));
    }
    rng.set_stream(key);
    rng
}

/// Uniform draw on the open interval (0, 1). Exact 0 is rejected; the
/// generator's range already excludes 1.
pub fn uniform_open(rng: &mut Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 && u < 1.0 {
            return u;
        }
    }
}

/// Standard exponential variate, strictly positive.
pub fn exp1(rng: &mut Rng) -> f64 {
    -uniform_open(rng).ln()
}

/// Standard normal variate (Box-Muller, one of the pair discarded).
pub fn normal(rng: &mut Rng) -> f64 {
    let u1 = uniform_open(rng);
    let u2 = uniform_open(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Serialisable snapshot of a stream position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Draws one `u64`; used to fork child seeds from a parent stream.
pub fn next_seed(rng: &mut Rng) -> u64 {
    rng.next_u64()
}
