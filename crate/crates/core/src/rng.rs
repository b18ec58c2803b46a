//! Seed handling.
//!
//! Every random stream is a `ChaCha8Rng` seeded with a 64-bit value. Sub-seeds
//! are derived from a master seed by folding a sequence of tags through
//! SplitMix64, so `derive(seed, &[FOLD, 3])` is stable across platforms and
//! independent of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const TAG_SPLIT: u64 = 0x5350_4c49;
pub const TAG_FOLD: u64 = 0x464f_4c44;
pub const TAG_INIT: u64 = 0x494e_4954;
pub const TAG_TRAIN: u64 = 0x5452_4e00;
pub const TAG_TRANSFORM: u64 = 0x5846_524d;
pub const TAG_SYNTH: u64 = 0x5359_4e54;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(seed: u64, tags: &[u64]) -> Rng {
    rng(derive(seed, tags))
}
