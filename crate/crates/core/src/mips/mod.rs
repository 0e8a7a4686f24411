//! Reduction of the revenue comparison to maximum inner product search.
//!
//! Assortment `S` becomes the point `z^S = (p ∘ u^S, u^S)` in `2n` dimensions
//! and threshold `K` becomes the query `v_K = (v_1..v_n, -v_1 K, .., -v_n K)`,
//! so that `v_K · z^S = sum_{i in S} v_i (p_i - K)`.

mod lsh;

pub use lsh::{
    collision_probability, empirical_failure_rate, lift, sign_bit, LshIndex, LshParams,
    LshQueryResult,
};

use crate::choice::MnlInstance;
use crate::error::{Error, Result};
use crate::feasible::FeasibleCollection;

/// Encoded points of a feasible collection.
///
/// Points are stored sparsely: point `k` is nonzero only at the coordinates
/// `i` and `n + i` for members `i` of assortment `k`.
#[derive(Debug, Clone)]
pub struct EncodedPointSet {
    item_count: usize,
    prices: Vec<f64>,
    offsets: Vec<usize>,
    members: Vec<u32>,
    back_refs: Vec<usize>,
    norms: Vec<f64>,
    max_norm: f64,
}

impl EncodedPointSet {
    /// Encodes every assortment of `collection` against the prices of a
    /// normalized instance.
    pub fn encode(instance: &MnlInstance, collection: &FeasibleCollection) -> Result<Self> {
        if collection.is_empty() {
            return Err(Error::EmptyCollection);
        }
        if instance.max_price() > 1.0 {
            return Err(Error::NotNormalized(instance.max_price()));
        }
        if collection.item_count() > instance.item_count() {
            if let Some(bad) = collection
                .iter()
                .flatten()
                .map(|&i| i as usize)
                .find(|&i| i >= instance.item_count())
            {
                return Err(Error::ItemOutOfRange {
                    item: bad,
                    n: instance.item_count(),
                });
            }
        }
        let prices = instance.prices().to_vec();
        let mut offsets = Vec::with_capacity(collection.len() + 1);
        let mut members = Vec::with_capacity(collection.total_members());
        offsets.push(0);
        let mut norms = Vec::with_capacity(collection.len());
        for set in collection.iter() {
            members.extend_from_slice(set);
            offsets.push(members.len());
            let sq: f64 = set.iter().map(|&i| prices[i as usize].powi(2) + 1.0).sum();
            norms.push(sq.sqrt());
        }
        let max_norm = norms.iter().copied().fold(0.0, f64::max);
        Ok(EncodedPointSet {
            item_count: instance.item_count(),
            prices,
            offsets,
            members,
            back_refs: (0..collection.len()).collect(),
            norms,
            max_norm,
        })
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    /// Dimension of every point, `2n`.
    pub fn dim(&self) -> usize {
        2 * self.item_count
    }

    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }

    pub fn norm(&self, point: usize) -> f64 {
        self.norms[point]
    }

    /// Index of the collection assortment encoded by `point`.
    pub fn back_ref(&self, point: usize) -> usize {
        self.back_refs[point]
    }

    pub fn members(&self, point: usize) -> &[u32] {
        &self.members[self.offsets[point]..self.offsets[point + 1]]
    }

    pub(crate) fn price(&self, item: u32) -> f64 {
        self.prices[item as usize]
    }

    /// Dense form of `point`.
    pub fn point(&self, point: usize) -> Vec<f64> {
        let n = self.item_count;
        let mut z = vec![0.0; 2 * n];
        for &i in self.members(point) {
            let i = i as usize;
            z[i] = self.prices[i];
            z[n + i] = 1.0;
        }
        z
    }

    /// Exact inner product of `query` with `point`.
    pub fn inner_product(&self, point: usize, query: &MipsQuery) -> f64 {
        let n = self.item_count;
        let q = query.as_slice();
        self.members(point)
            .iter()
            .map(|&i| {
                let i = i as usize;
                q[i] * self.prices[i] + q[n + i]
            })
            .sum()
    }
}

/// Query vector `v_K` for threshold `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct MipsQuery {
    values: Vec<f64>,
    threshold: f64,
}

impl MipsQuery {
    pub fn for_threshold(instance: &MnlInstance, threshold: f64) -> Self {
        let v = instance.utilities();
        let mut values = Vec::with_capacity(2 * v.len());
        values.extend_from_slice(v);
        values.extend(v.iter().map(|vi| -vi * threshold));
        MipsQuery { values, threshold }
    }

    /// Wraps an arbitrary `2n`-dimensional vector.
    pub fn from_vector(values: Vec<f64>) -> Self {
        MipsQuery {
            values,
            threshold: f64::NAN,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Linear scan for the point with the largest inner product; ties go to the
/// lowest assortment index.
pub fn exact_argmax(points: &EncodedPointSet, query: &MipsQuery) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for k in 0..points.len() {
        let ip = points.inner_product(k, query);
        let idx = points.back_ref(k);
        if ip > best.1 || (ip == best.1 && idx < best.0) {
            best = (idx, ip);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn encoding_example() {
        let inst = MnlInstance::new(vec![1.0, 0.5], vec![0.5, 0.25], 1.0).unwrap();
        let coll = FeasibleCollection::new(2, vec![vec![0], vec![0, 1]]).unwrap();
        let pts = EncodedPointSet::encode(&inst, &coll).unwrap();
        assert_eq!(pts.dim(), 4);
        assert_eq!(pts.point(0), vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(pts.point(1), vec![1.0, 0.5, 1.0, 1.0]);
        let q = MipsQuery::for_threshold(&inst, 0.5);
        assert_eq!(q.as_slice(), &[0.5, 0.25, -0.25, -0.125]);
        assert!((pts.inner_product(0, &q) - 0.25).abs() < 1e-15);

        // K = 0 leaves sum v_i p_i
        let q0 = MipsQuery::for_threshold(&inst, 0.0);
        assert!((pts.inner_product(1, &q0) - (0.5 + 0.125)).abs() < 1e-15);
        assert_eq!(dense_dot(&[0.0; 4], q.as_slice()), 0.0);
    }

    #[test]
    fn encode_rejects_unnormalized_prices() {
        let inst = MnlInstance::new(vec![2.0, 0.5], vec![0.5, 0.25], 1.0).unwrap();
        let coll = FeasibleCollection::new(2, vec![vec![0]]).unwrap();
        assert!(matches!(
            EncodedPointSet::encode(&inst, &coll),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn exact_argmax_examples() {
        let inst = MnlInstance::new(vec![1.0, 0.2, 0.6], vec![0.5, 0.9, 0.4], 1.0).unwrap();
        let coll = FeasibleCollection::new(3, vec![vec![1], vec![0], vec![2]]).unwrap();
        let pts = EncodedPointSet::encode(&inst, &coll).unwrap();
        let q = MipsQuery::for_threshold(&inst, 0.1);
        let (idx, ip) = exact_argmax(&pts, &q);
        // values: 0.9*0.1, 0.5*0.9, 0.4*0.5
        assert_eq!(idx, 1);
        assert!((ip - 0.45).abs() < 1e-12);
        // independent re-scan over dense vectors
        let rescan = (0..3)
            .max_by(|&a, &b| {
                dense_dot(&pts.point(a), q.as_slice())
                    .total_cmp(&dense_dot(&pts.point(b), q.as_slice()))
            })
            .unwrap();
        assert_eq!(rescan, idx);

        let single = FeasibleCollection::new(3, vec![vec![2]]).unwrap();
        let pts = EncodedPointSet::encode(&inst, &single).unwrap();
        assert_eq!(exact_argmax(&pts, &q).0, 0);
    }

    #[test]
    fn exact_argmax_tie_goes_to_lowest_index() {
        let inst = MnlInstance::new(vec![1.0, 1.0, 1.0], vec![0.5, 0.5, 0.5], 1.0).unwrap();
        let coll = FeasibleCollection::new(3, vec![vec![2], vec![1], vec![0]]).unwrap();
        let pts = EncodedPointSet::encode(&inst, &coll).unwrap();
        let q = MipsQuery::for_threshold(&inst, 0.3);
        assert_eq!(exact_argmax(&pts, &q).0, 0);
    }

    proptest! {
        #[test]
        fn inner_product_matches_dense_and_objective(seed in any::<u64>(), k in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..12);
            let prices: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let max = prices.iter().copied().fold(0.0, f64::max).max(1e-9);
            let prices: Vec<f64> = prices.iter().map(|p| p / max).collect();
            let utilities: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let inst = MnlInstance::new(prices, utilities, 1.0).unwrap();
            let sets: Vec<Vec<usize>> = (0..20)
                .map(|_| (0..n).filter(|_| rng.random_bool(0.5)).collect::<Vec<_>>())
                .filter(|s: &Vec<usize>| !s.is_empty())
                .collect();
            prop_assume!(!sets.is_empty());
            let coll = FeasibleCollection::new(n, sets).unwrap();
            let pts = EncodedPointSet::encode(&inst, &coll).unwrap();
            let q = MipsQuery::for_threshold(&inst, k);
            for p in 0..pts.len() {
                let sparse = pts.inner_product(p, &q);
                let dense = dense_dot(&pts.point(p), q.as_slice());
                let objective = inst.threshold_value(coll.members(p), k);
                prop_assert!((sparse - dense).abs() < 1e-12);
                prop_assert!((sparse - objective).abs() < 1e-12);
                prop_assert!((pts.norm(p) - dense_dot(&pts.point(p), &pts.point(p)).sqrt()).abs() < 1e-12);
            }
        }
    }
}
