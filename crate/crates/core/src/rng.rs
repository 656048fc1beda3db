//! Seed derivation. Every random draw in the crate comes from a ChaCha stream
//! whose seed is a pure function of the run seed and a few integer
//! coordinates (epoch, batch, node, ...), so work can be split across threads
//! without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags, so that coordinates of different purposes never collide.
pub mod tag {
    pub const NEIGHBORS: u64 = 1;
    pub const WALKS: u64 = 2;
    pub const NEGATIVES: u64 = 3;
    pub const GUMBEL: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const INIT: u64 = 6;
    pub const EPOCH_ORDER: u64 = 7;
    pub const BATCH: u64 = 8;
    pub const LINKS: u64 = 9;
    pub const POSITIVES: u64 = 10;
    pub const HOLDOUT: u64 = 11;
    pub const CANDIDATES: u64 = 12;
    pub const SYNTH: u64 = 13;
    pub const DIRICHLET: u64 = 14;
    pub const INFERENCE: u64 = 15;
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a base seed with an ordered list of coordinates.
pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    stream(mix(seed, parts))
}
