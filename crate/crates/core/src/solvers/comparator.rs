//! Comparison steps: given a threshold `K`, find the assortment maximizing
//! `sum_{i in S} v_i (p_i - K)` (exactly or approximately) and report it.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::capacitated::CapacityConstraint;
use crate::choice::MnlInstance;
use crate::error::Result;
use crate::mips::{exact_argmax, EncodedPointSet, LshIndex, LshParams, MipsQuery};
use crate::seed;

/// Assortment returned by a comparison step.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    /// Sorted member indices.
    pub members: Vec<u32>,
    /// Position in the feasible collection, when there is one.
    pub index: Option<usize>,
}

/// Outcome of one comparison step.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    /// `None` when the search produced no candidate at all.
    pub witness: Option<Witness>,
    /// Exact objective value of the witness, `-inf` without one.
    pub value: f64,
    /// Candidates whose objective was evaluated.
    pub scored: usize,
}

impl Probe {
    pub fn no_candidate(scored: usize) -> Self {
        Probe {
            witness: None,
            value: f64::NEG_INFINITY,
            scored,
        }
    }

    /// Whether the probe certifies `K <= value / v0`. For `v0 = 0` this is
    /// `0 <= value`.
    pub fn supports(&self, threshold: f64, no_purchase: f64) -> bool {
        self.witness.is_some() && self.value >= threshold * no_purchase
    }
}

/// A comparison oracle over normalized thresholds in `[0, 1]`.
pub trait Comparator {
    /// Answers the comparison at `threshold` for search step `iteration`
    /// (0-based).
    fn probe(&mut self, iteration: usize, threshold: f64) -> Result<Probe>;

    /// Time spent building search structures so far.
    fn build_nanos(&self) -> u64 {
        0
    }
}

impl<C: Comparator + ?Sized> Comparator for Box<C> {
    fn probe(&mut self, iteration: usize, threshold: f64) -> Result<Probe> {
        (**self).probe(iteration, threshold)
    }

    fn build_nanos(&self) -> u64 {
        (**self).build_nanos()
    }
}

fn collection_witness(points: &EncodedPointSet, index: usize) -> Witness {
    Witness {
        members: points.members(index).to_vec(),
        index: Some(index),
    }
}

/// Linear scan over every encoded assortment.
#[derive(Debug, Clone, Copy)]
pub struct ExactComparator<'a> {
    instance: &'a MnlInstance,
    points: &'a EncodedPointSet,
}

impl<'a> ExactComparator<'a> {
    pub fn new(instance: &'a MnlInstance, points: &'a EncodedPointSet) -> Self {
        ExactComparator { instance, points }
    }
}

impl Comparator for ExactComparator<'_> {
    fn probe(&mut self, _iteration: usize, threshold: f64) -> Result<Probe> {
        let query = MipsQuery::for_threshold(self.instance, threshold);
        let (index, value) = exact_argmax(self.points, &query);
        Ok(Probe {
            witness: Some(collection_witness(self.points, index)),
            value,
            scored: self.points.len(),
        })
    }
}

fn lsh_probe(index: &LshIndex, instance: &MnlInstance, points: &EncodedPointSet, k: f64) -> Probe {
    let query = MipsQuery::for_threshold(instance, k);
    let result = index.query(points, &query);
    match result.best {
        Some((best, value)) => Probe {
            witness: Some(collection_witness(points, best)),
            value,
            scored: result.scored,
        },
        None => Probe::no_candidate(result.scored),
    }
}

/// One LSH index shared by every step.
#[derive(Debug, Clone)]
pub struct LshComparator<'a> {
    instance: &'a MnlInstance,
    points: &'a EncodedPointSet,
    index: LshIndex,
    build_nanos: u64,
}

impl<'a> LshComparator<'a> {
    pub fn new(
        instance: &'a MnlInstance,
        points: &'a EncodedPointSet,
        params: &LshParams,
    ) -> Result<Self> {
        let start = Instant::now();
        let index = LshIndex::build(points, params)?;
        Ok(LshComparator {
            instance,
            points,
            index,
            build_nanos: start.elapsed().as_nanos() as u64,
        })
    }

    pub fn index(&self) -> &LshIndex {
        &self.index
    }
}

impl Comparator for LshComparator<'_> {
    fn probe(&mut self, _iteration: usize, threshold: f64) -> Result<Probe> {
        Ok(lsh_probe(
            &self.index,
            self.instance,
            self.points,
            threshold,
        ))
    }

    fn build_nanos(&self) -> u64 {
        self.build_nanos
    }
}

/// A family of independent LSH indices; step `j` queries child index `j`,
/// built on first use.
#[derive(Debug, Clone)]
pub struct LshFamilyComparator<'a> {
    instance: &'a MnlInstance,
    points: &'a EncodedPointSet,
    params: LshParams,
    current: (usize, LshIndex),
    build_nanos: u64,
}

impl<'a> LshFamilyComparator<'a> {
    pub fn new(
        instance: &'a MnlInstance,
        points: &'a EncodedPointSet,
        params: &LshParams,
    ) -> Result<Self> {
        let start = Instant::now();
        let first = LshIndex::build_child(points, params, 0)?;
        Ok(LshFamilyComparator {
            instance,
            points,
            params: *params,
            current: (0, first),
            build_nanos: start.elapsed().as_nanos() as u64,
        })
    }

    // only the index for the latest iteration is kept alive
    fn child(&mut self, j: usize) -> Result<&LshIndex> {
        if self.current.0 != j {
            let start = Instant::now();
            self.current = (j, LshIndex::build_child(self.points, &self.params, j)?);
            self.build_nanos += start.elapsed().as_nanos() as u64;
        }
        Ok(&self.current.1)
    }
}

impl Comparator for LshFamilyComparator<'_> {
    fn probe(&mut self, iteration: usize, threshold: f64) -> Result<Probe> {
        let (instance, points) = (self.instance, self.points);
        let index = self.child(iteration)?;
        Ok(lsh_probe(index, instance, points, threshold))
    }

    fn build_nanos(&self) -> u64 {
        self.build_nanos
    }
}

/// Top-`C` style selection for capacity-constrained families.
#[derive(Debug, Clone)]
pub struct CapacityComparator<'a> {
    instance: &'a MnlInstance,
    constraint: &'a CapacityConstraint,
    weights: Vec<f64>,
}

impl<'a> CapacityComparator<'a> {
    /// `constraint` must already be validated against `instance`.
    pub fn new(instance: &'a MnlInstance, constraint: &'a CapacityConstraint) -> Self {
        CapacityComparator {
            instance,
            constraint,
            weights: Vec::with_capacity(instance.item_count()),
        }
    }
}

impl Comparator for CapacityComparator<'_> {
    fn probe(&mut self, _iteration: usize, threshold: f64) -> Result<Probe> {
        self.weights.clear();
        self.weights.extend(
            self.instance
                .prices()
                .iter()
                .zip(self.instance.utilities())
                .map(|(p, v)| v * (p - threshold)),
        );
        let (members, value) = self.constraint.select(&self.weights);
        Ok(Probe {
            witness: Some(Witness {
                members,
                index: None,
            }),
            value,
            scored: self.weights.len(),
        })
    }
}

/// Wraps a comparator and flips each comparison outcome independently with
/// a fixed probability. The witness is left untouched; only the reported
/// value moves to `+inf` or `-inf`.
#[derive(Debug, Clone)]
pub struct NoisyComparator<C> {
    inner: C,
    no_purchase: f64,
    flip_probability: f64,
    rng: ChaCha8Rng,
    flips: usize,
}

impl<C: Comparator> NoisyComparator<C> {
    pub fn new(inner: C, no_purchase: f64, flip_probability: f64, seed: u64) -> Self {
        assert!(
            (0.0..=1.0).contains(&flip_probability),
            "flip probability must lie in [0, 1]"
        );
        NoisyComparator {
            inner,
            no_purchase,
            flip_probability,
            rng: seed::rng(seed::derive(seed, seed::NOISE)),
            flips: 0,
        }
    }

    pub fn flips(&self) -> usize {
        self.flips
    }
}

impl<C: Comparator> Comparator for NoisyComparator<C> {
    fn probe(&mut self, iteration: usize, threshold: f64) -> Result<Probe> {
        let mut probe = self.inner.probe(iteration, threshold)?;
        if self.rng.random_bool(self.flip_probability) {
            self.flips += 1;
            if probe.supports(threshold, self.no_purchase) {
                probe.value = f64::NEG_INFINITY;
            } else if probe.witness.is_some() {
                probe.value = f64::INFINITY;
            } else {
                probe.value = f64::INFINITY;
                probe.witness = Some(Witness {
                    members: Vec::new(),
                    index: None,
                });
            }
        }
        Ok(probe)
    }

    fn build_nanos(&self) -> u64 {
        self.inner.build_nanos()
    }
}
