//! Synthetic instances and collections.
//!
//! Prices are uniform on `[0, 1000]`. Utilities are either uniform on
//! `[0, 1]` or negatively correlated with price through
//! `v = exp(-(4.61 + 0.00461 p + G))`, `G ~ N(0, 0.1)`.
//! Every generator derives its own stream from the seed it is given.

use std::collections::HashSet;
use std::ops::RangeInclusive;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::choice::MnlInstance;
use crate::error::{Error, Result};
use crate::feasible::FeasibleCollection;
use crate::seed;

pub const MAX_PRICE: f64 = 1000.0;
pub const DELTA_1: f64 = 4.61;
pub const DELTA_2: f64 = 0.00461;
pub const NOISE_VARIANCE: f64 = 0.1;

const MAX_REJECTIONS: usize = 1 << 20;

fn check_items(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "item count must be at least 1".into(),
        ));
    }
    Ok(())
}

/// `exp(-(delta_1 + delta_2 p + g))`, capped at 1.
pub fn neg_correlated_utility(price: f64, noise: f64) -> f64 {
    (-(DELTA_1 + DELTA_2 * price + noise)).exp().min(1.0)
}

/// Independent `U[0, 1000]` prices and `U[0, 1]` utilities, `v0 = 1`.
pub fn uniform(n: usize, seed: u64) -> Result<MnlInstance> {
    check_items(n)?;
    let mut rng = seed::rng(seed::derive(seed, seed::GENERATOR_INSTANCE));
    let mut prices = Vec::with_capacity(n);
    let mut utilities = Vec::with_capacity(n);
    for _ in 0..n {
        prices.push(rng.random_range(0.0..=MAX_PRICE));
        utilities.push(rng.random_range(0.0..=1.0));
    }
    MnlInstance::new(prices, utilities, 1.0)
}

/// `U[0, 1000]` prices with utilities decreasing in price, `v0 = 1`.
pub fn neg_correlated(n: usize, seed: u64) -> Result<MnlInstance> {
    check_items(n)?;
    let mut rng = seed::rng(seed::derive(seed, seed::GENERATOR_INSTANCE));
    let noise = Normal::new(0.0, NOISE_VARIANCE.sqrt()).expect("valid normal parameters");
    let mut prices = Vec::with_capacity(n);
    let mut utilities = Vec::with_capacity(n);
    for _ in 0..n {
        let p = rng.random_range(0.0..=MAX_PRICE);
        prices.push(p);
        utilities.push(neg_correlated_utility(p, noise.sample(&mut rng)));
    }
    MnlInstance::new(prices, utilities, 1.0)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    c
}

/// `count` distinct assortments whose sizes are drawn uniformly from
/// `sizes`, members uniformly without replacement.
pub fn random_collection(
    n: usize,
    count: usize,
    sizes: RangeInclusive<usize>,
    seed: u64,
) -> Result<FeasibleCollection> {
    check_items(n)?;
    let (lo, hi) = (*sizes.start(), (*sizes.end()).min(n));
    if count == 0 {
        return Err(Error::EmptyCollection);
    }
    if lo == 0 || lo > hi {
        return Err(Error::InvalidParameter(format!(
            "assortment sizes {lo}..={} are not achievable with {n} items",
            sizes.end()
        )));
    }
    let available: u128 = (lo..=hi)
        .map(|k| binomial(n, k))
        .fold(0, u128::saturating_add);
    if (count as u128) > available {
        return Err(Error::InvalidParameter(format!(
            "only {available} distinct assortments have sizes {lo}..={hi}"
        )));
    }
    let mut rng = seed::rng(seed::derive(seed, seed::GENERATOR_COLLECTION));
    let mut seen: HashSet<Vec<u32>> = HashSet::with_capacity(count);
    let mut sets = Vec::with_capacity(count);
    let mut rejections = 0;
    while sets.len() < count {
        let k = rng.random_range(lo..=hi);
        let mut s: Vec<u32> = index::sample(&mut rng, n, k)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        s.sort_unstable();
        if seen.insert(s.clone()) {
            sets.push(s);
        } else {
            rejections += 1;
            if rejections > MAX_REJECTIONS {
                return Err(Error::InvalidParameter(format!(
                    "could not draw {count} distinct assortments after {MAX_REJECTIONS} rejections"
                )));
            }
        }
    }
    FeasibleCollection::new(
        n,
        sets.into_iter().map(|s| s.into_iter().map(|i| i as usize)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utility_formula_examples() {
        assert!((neg_correlated_utility(0.0, 0.0) - (-4.61f64).exp()).abs() < 1e-15);
        assert!((neg_correlated_utility(0.0, 0.0) - 0.00995).abs() < 5e-6);
        assert!((neg_correlated_utility(1000.0, 0.0) - (-9.22f64).exp()).abs() < 1e-15);
        assert_eq!(neg_correlated_utility(0.0, -10.0), 1.0);
    }

    #[test]
    fn uniform_bounds_on_many_draws() {
        let inst = uniform(100_000, 5).unwrap();
        assert!(inst
            .prices()
            .iter()
            .all(|&p| (0.0..=MAX_PRICE).contains(&p)));
        assert!(inst.utilities().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let mean_p: f64 = inst.prices().iter().sum::<f64>() / 1e5;
        let mean_v: f64 = inst.utilities().iter().sum::<f64>() / 1e5;
        // standard errors are about 0.9 and 0.0009
        assert!((mean_p - 500.0).abs() < 5.0);
        assert!((mean_v - 0.5).abs() < 0.005);
        assert_eq!(uniform(1, 0).unwrap().item_count(), 1);
        assert!(uniform(0, 0).is_err());
    }

    #[test]
    fn neg_correlated_noise_statistics() {
        let inst = neg_correlated(50_000, 9).unwrap();
        // recover G from v and p
        let g: Vec<f64> = inst
            .prices()
            .iter()
            .zip(inst.utilities())
            .map(|(&p, &v)| -v.ln() - DELTA_1 - DELTA_2 * p)
            .collect();
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        let var = g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (g.len() - 1) as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - NOISE_VARIANCE).abs() < 0.005);
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(uniform(50, 3).unwrap(), uniform(50, 3).unwrap());
        assert_eq!(
            neg_correlated(50, 3).unwrap(),
            neg_correlated(50, 3).unwrap()
        );
        assert_ne!(uniform(50, 3).unwrap(), uniform(50, 4).unwrap());
        let a = random_collection(30, 200, 2..=6, 1).unwrap();
        let b = random_collection(30, 200, 2..=6, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn collections_are_distinct_and_sized() {
        let c = random_collection(20, 500, 3..=5, 2).unwrap();
        assert_eq!(c.len(), 500);
        let distinct: HashSet<&[u32]> = c.iter().collect();
        assert_eq!(distinct.len(), 500);
        assert!(c.iter().all(|s| (3..=5).contains(&s.len())));
        // all 10 pairs of five items
        assert_eq!(random_collection(5, 10, 2..=2, 0).unwrap().len(), 10);
        assert!(random_collection(5, 11, 2..=2, 0).is_err());
        assert!(random_collection(5, 3, 0..=2, 0).is_err());
    }
}
