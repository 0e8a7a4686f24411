//! Seed derivation.
//!
//! Every stochastic component draws from a ChaCha8 stream whose seed is
//! `derive(parent, stream)`, a SplitMix64 mix of the parent seed and a
//! stream tag. Changing one component's stream never perturbs another's.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const GENERATOR_INSTANCE: u64 = 1;
pub const GENERATOR_COLLECTION: u64 = 2;
pub const LSH: u64 = 3;
pub const BZ_THRESHOLD: u64 = 4;
pub const NOISE: u64 = 5;
pub const HELD_OUT_QUERIES: u64 = 6;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(parent: u64, stream: u64) -> u64 {
    splitmix(splitmix(parent) ^ stream.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
