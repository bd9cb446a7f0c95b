//! Seed derivation.
//!
//! A run is driven by one integer seed. Every consumer of randomness gets its
//! own stream seed via `derive(base, &[tag, i, j, ..])`: the base seed and each
//! counter are folded through SplitMix64 in order. Tags keep streams from
//! different stages apart even when their counters coincide.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_OUTER_FOLDS: u64 = 1;
pub const TAG_INNER_FOLDS: u64 = 2;
pub const TAG_TRAIN: u64 = 3;
pub const TAG_PLATT: u64 = 4;
pub const TAG_SUBSAMPLE: u64 = 5;
pub const TAG_SYNTH: u64 = 6;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(base: u64, counters: &[u64]) -> u64 {
    counters
        .iter()
        .fold(splitmix64(base), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
