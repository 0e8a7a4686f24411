//! Sign-random-projection LSH over lifted points.
//!
//! Stored points are scaled by `1 / max_norm` and lifted onto the unit sphere
//! with `T(x) = [x; sqrt(1 - |x|^2)]`; queries get a zero appended. Each of
//! the `L2` tables keys a point by `L1` sign bits `sign(a · T(x))`.
//! Retrieved candidates are rescored exactly against the original query.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{exact_argmax, EncodedPointSet, MipsQuery};
use crate::error::{Error, Result};
use crate::seed;

/// Construction parameters for [`LshIndex`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LshParams {
    /// Exponent giving `L2 = ceil(N^rho)` tables.
    pub rho: f64,
    pub seed: u64,
    /// Candidate budget `L3`, counting duplicates; defaults to `3 * L2`.
    pub probe_budget: Option<usize>,
}

impl Default for LshParams {
    fn default() -> Self {
        LshParams {
            rho: 0.5,
            seed: 0,
            probe_budget: None,
        }
    }
}

impl LshParams {
    pub fn with_seed(self, seed: u64) -> Self {
        LshParams { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        if self.probe_budget == Some(0) {
            return Err(Error::InvalidParameter(
                "probe budget must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `(L1, L2, L3)` for a point set of size `n_points`.
    pub fn multiplicities(&self, n_points: usize) -> (usize, usize, usize) {
        let n = n_points.max(1) as f64;
        let bits = (n.log2().ceil() as usize).clamp(1, 64);
        let tables = (n.powf(self.rho).ceil() as usize).max(1);
        let budget = self.probe_budget.unwrap_or(3 * tables);
        (bits, tables, budget)
    }
}

/// Outcome of one approximate query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LshQueryResult {
    /// Best retrieved assortment index and its exact inner product;
    /// `None` when every probed bucket was empty.
    pub best: Option<(usize, f64)>,
    /// Bucket entries visited, duplicates included.
    pub probed: usize,
    /// Distinct candidates rescored.
    pub scored: usize,
}

/// One hash table as sorted distinct keys with their buckets laid out
/// contiguously.
#[derive(Debug, Clone)]
struct Table {
    keys: Vec<u64>,
    starts: Vec<u32>,
    ids: Vec<u32>,
}

impl Table {
    fn from_entries(entries: &mut [(u64, u32)]) -> Self {
        entries.sort_unstable();
        let mut keys = Vec::new();
        let mut starts = Vec::new();
        for (pos, &(key, _)) in entries.iter().enumerate() {
            if keys.last() != Some(&key) {
                keys.push(key);
                starts.push(pos as u32);
            }
        }
        starts.push(entries.len() as u32);
        Table {
            keys,
            starts,
            ids: entries.iter().map(|&(_, p)| p).collect(),
        }
    }

    fn bucket(&self, b: usize) -> &[u32] {
        &self.ids[self.starts[b] as usize..self.starts[b + 1] as usize]
    }

    fn get(&self, key: u64) -> Option<&[u32]> {
        self.keys.binary_search(&key).ok().map(|b| self.bucket(b))
    }
}

#[derive(Debug, Clone)]
pub struct LshIndex {
    hash_bits: usize,
    table_count: usize,
    probe_budget: usize,
    // coordinate-major: entry `c * rows + r` is coordinate `c` of projection
    // `r = table * hash_bits + bit`; there are `dim + 1` coordinates
    projections: Vec<f32>,
    dim: usize,
    sphere_scale: f64,
    tables: Vec<Table>,
    seed: u64,
}

impl LshIndex {
    pub fn build(points: &EncodedPointSet, params: &LshParams) -> Result<Self> {
        params.validate()?;
        if points.is_empty() {
            return Err(Error::EmptyCollection);
        }
        let (hash_bits, table_count, probe_budget) = params.multiplicities(points.len());
        let dim = points.dim();
        let rows = hash_bits * table_count;
        let mut rng = seed::rng(params.seed);
        let projections: Vec<f32> = (0..rows * (dim + 1))
            .map(|_| rng.sample::<f32, _>(StandardNormal))
            .collect();
        let sphere_scale = if points.max_norm() > 0.0 {
            1.0 / points.max_norm()
        } else {
            1.0
        };
        let mut index = LshIndex {
            hash_bits,
            table_count,
            probe_budget,
            projections,
            dim,
            sphere_scale,
            tables: Vec::with_capacity(table_count),
            seed: params.seed,
        };
        let item_sums = index.item_projections(points);
        let n_points = points.len();
        let mut acc = vec![0.0; rows];
        let mut entries = vec![(0u64, 0u32); n_points * table_count];
        for p in 0..n_points {
            index.project_point(points, &item_sums, p, &mut acc);
            for t in 0..table_count {
                entries[t * n_points + p] = (index.key(&acc, t), p as u32);
            }
        }
        for chunk in entries.chunks_mut(n_points) {
            index.tables.push(Table::from_entries(chunk));
        }
        Ok(index)
    }

    /// Index `j` of a family of structurally independent indices sharing
    /// `params`; its seed is derived from `params.seed` and `j`.
    pub fn build_child(points: &EncodedPointSet, params: &LshParams, j: usize) -> Result<Self> {
        let child = params.with_seed(seed::derive(params.seed, j as u64));
        Self::build(points, &child)
    }

    pub fn build_family(
        points: &EncodedPointSet,
        params: &LshParams,
        count: usize,
    ) -> Result<Vec<Self>> {
        (0..count)
            .map(|j| Self::build_child(points, params, j))
            .collect()
    }

    /// `L1`.
    pub fn hash_bits(&self) -> usize {
        self.hash_bits
    }

    /// `L2`.
    pub fn table_count(&self) -> usize {
        self.table_count
    }

    /// `L3`.
    pub fn probe_budget(&self) -> usize {
        self.probe_budget
    }

    pub fn sphere_scale(&self) -> f64 {
        self.sphere_scale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Bucket contents of table `t`, sorted by key, for inspection.
    pub fn buckets(&self, t: usize) -> Vec<(u64, Vec<u32>)> {
        let table = &self.tables[t];
        (0..table.keys.len())
            .map(|b| (table.keys[b], table.bucket(b).to_vec()))
            .collect()
    }

    fn rows(&self) -> usize {
        self.hash_bits * self.table_count
    }

    fn column(&self, c: usize) -> &[f32] {
        let rows = self.rows();
        &self.projections[c * rows..(c + 1) * rows]
    }

    /// Row `i` holds the projections of `(p_i e_i, e_i)`, so a point's
    /// projections are the sum over its members.
    fn item_projections(&self, points: &EncodedPointSet) -> Vec<f32> {
        let n = points.item_count();
        let mut sums = Vec::with_capacity(n * self.rows());
        for i in 0..n {
            let price = points.price(i as u32) as f32;
            sums.extend(
                self.column(i)
                    .iter()
                    .zip(self.column(n + i))
                    .map(|(a, b)| price * a + b),
            );
        }
        sums
    }

    /// Projections of point `p` after scaling and lifting, divided by the
    /// (positive) scale.
    fn project_point(
        &self,
        points: &EncodedPointSet,
        item_sums: &[f32],
        p: usize,
        acc: &mut [f32],
    ) {
        let rows = self.rows();
        acc.fill(0.0);
        for &i in points.members(p) {
            let row = &item_sums[i as usize * rows..(i as usize + 1) * rows];
            for (x, y) in acc.iter_mut().zip(row) {
                *x += y;
            }
        }
        let r = self.sphere_scale * points.norm(p);
        let lift = ((1.0 - r * r).max(0.0).sqrt() / self.sphere_scale) as f32;
        for (x, y) in acc.iter_mut().zip(self.column(self.dim)) {
            *x += lift * y;
        }
    }

    // The query is conceptually unit-normalized and lifted with a zero last
    // coordinate; neither changes the sign of a projection.
    fn project_query(&self, q: &[f64], acc: &mut [f32]) {
        acc.fill(0.0);
        for (c, &x) in q.iter().enumerate() {
            if x != 0.0 {
                let x = x as f32;
                for (a, y) in acc.iter_mut().zip(self.column(c)) {
                    *a += x * y;
                }
            }
        }
    }

    fn key(&self, acc: &[f32], t: usize) -> u64 {
        acc[t * self.hash_bits..(t + 1) * self.hash_bits]
            .iter()
            .fold(0u64, |key, &dot| key << 1 | u64::from(dot >= 0.0))
    }

    /// Approximate argmax of `query · z` over the indexed points.
    pub fn query(&self, points: &EncodedPointSet, query: &MipsQuery) -> LshQueryResult {
        assert_eq!(query.as_slice().len(), self.dim, "query dimension mismatch");
        let mut acc = vec![0.0; self.rows()];
        self.project_query(query.as_slice(), &mut acc);
        let mut candidates: Vec<u32> = Vec::new();
        let mut probed = 0;
        'tables: for t in 0..self.table_count {
            if let Some(bucket) = self.tables[t].get(self.key(&acc, t)) {
                for &p in bucket {
                    candidates.push(p);
                    probed += 1;
                    if probed >= self.probe_budget {
                        break 'tables;
                    }
                }
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        let mut best: Option<(usize, f64)> = None;
        for &p in &candidates {
            let ip = points.inner_product(p as usize, query);
            let idx = points.back_ref(p as usize);
            best = match best {
                Some((bi, bv)) if bv > ip || (bv == ip && bi < idx) => Some((bi, bv)),
                _ => Some((idx, ip)),
            };
        }
        LshQueryResult {
            best,
            probed,
            scored: candidates.len(),
        }
    }
}

/// Fraction of `queries` for which `index` does not return a point attaining
/// the exact maximum inner product (an empirical `Pe`).
pub fn empirical_failure_rate(
    index: &LshIndex,
    points: &EncodedPointSet,
    queries: &[MipsQuery],
) -> f64 {
    if queries.is_empty() {
        return 0.0;
    }
    let misses = queries
        .iter()
        .filter(|q| {
            let (_, top) = exact_argmax(points, q);
            match index.query(points, q).best {
                Some((_, v)) => v < top - 1e-12 * (1.0 + top.abs()),
                None => true,
            }
        })
        .count();
    misses as f64 / queries.len() as f64
}

/// `T(x) = [x; sqrt(1 - |x|^2)]` for `|x| <= 1`.
pub fn lift(x: &[f64]) -> Vec<f64> {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    let mut out = x.to_vec();
    out.push((1.0 - sq).max(0.0).sqrt());
    out
}

/// One sign-projection hash bit, `a · x >= 0`.
pub fn sign_bit(a: &[f64], x: &[f64]) -> bool {
    a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() >= 0.0
}

/// Per-bit collision probability `1 - theta / pi` of two vectors.
pub fn collision_probability(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    let cos = (dot / (nx * ny)).clamp(-1.0, 1.0);
    1.0 - cos.acos() / std::f64::consts::PI
}
