//! Shared fixtures for the benchmarks.

use assort_core::generate::{neg_correlated, random_collection};
use assort_core::{FeasibleCollection, MnlInstance};

/// Negatively correlated instance over `n` items with `count` random
/// assortments of 8 to 16 items.
pub fn general_fixture(n: usize, count: usize, seed: u64) -> (MnlInstance, FeasibleCollection) {
    let inst = neg_correlated(n, seed).expect("valid generator parameters");
    let coll = random_collection(n, count, 8..=16, seed).expect("enough distinct assortments");
    (inst, coll)
}
