//! Reference solvers: exhaustive enumeration and ADXOpt local search.

use std::time::Instant;

use super::capacitated::CapacityConstraint;
use super::comparator::Witness;
use super::search::{finish, Counters, Timing};
use super::SolveReport;
use crate::choice::MnlInstance;
use crate::error::{Error, Result};
use crate::feasible::FeasibleCollection;

const MAX_ENUMERATED_ITEMS: usize = 24;

fn untimed(start: Instant) -> Timing {
    Timing {
        start,
        prior_nanos: 0,
        build_nanos: 0,
    }
}

/// Scores every assortment of the collection; ties go to the lowest index.
pub fn exhaustive_solve(
    instance: &MnlInstance,
    collection: &FeasibleCollection,
) -> Result<SolveReport> {
    let start = Instant::now();
    if collection.is_empty() {
        return Err(Error::EmptyCollection);
    }
    if let Some(bad) = collection
        .iter()
        .flatten()
        .find(|&&i| i as usize >= instance.item_count())
    {
        return Err(Error::ItemOutOfRange {
            item: *bad as usize,
            n: instance.item_count(),
        });
    }
    let mut best = (0, instance.revenue_of(collection.members(0)));
    for (k, set) in collection.iter().enumerate().skip(1) {
        let r = instance.revenue_of(set);
        if r > best.1 {
            best = (k, r);
        }
    }
    let witness = Witness {
        members: collection.members(best.0).to_vec(),
        index: Some(best.0),
    };
    let counters = Counters {
        scored: collection.len(),
        ..Counters::default()
    };
    finish(instance, &witness, &counters, untimed(start), Vec::new())
}

/// Enumerates every nonempty subset admitted by `constraint`; only for small
/// universes. Ties go to the subset with the smallest bit mask.
pub fn exhaustive_capacitated(
    instance: &MnlInstance,
    constraint: &CapacityConstraint,
) -> Result<SolveReport> {
    let start = Instant::now();
    let n = instance.item_count();
    if n > MAX_ENUMERATED_ITEMS {
        return Err(Error::InvalidParameter(format!(
            "enumeration is limited to {MAX_ENUMERATED_ITEMS} items, got {n}"
        )));
    }
    constraint.validate(n)?;
    let mut best: Option<(Vec<u32>, f64)> = None;
    let mut members = Vec::with_capacity(n);
    let mut scored = 0;
    for mask in 1u32..1 << n {
        members.clear();
        members.extend((0..n as u32).filter(|i| mask >> i & 1 == 1));
        if !constraint.admits(&members) {
            continue;
        }
        scored += 1;
        let r = instance.revenue_of(&members);
        if best.as_ref().is_none_or(|b| r > b.1) {
            best = Some((members.clone(), r));
        }
    }
    let (members, _) =
        best.ok_or_else(|| Error::Infeasible("no subset satisfies the constraint".into()))?;
    let counters = Counters {
        scored,
        ..Counters::default()
    };
    let witness = Witness {
        members,
        index: None,
    };
    finish(instance, &witness, &counters, untimed(start), Vec::new())
}

/// Revenue after the move, the member position it removes and the item it
/// adds.
type Move = (f64, Option<usize>, Option<usize>);

/// Running sums for the revenue of a changing assortment.
struct Sums {
    numerator: f64,
    weight: f64,
    no_purchase: f64,
}

impl Sums {
    fn revenue_with(&self, dn: f64, dw: f64) -> f64 {
        let numerator = self.numerator + dn;
        if numerator <= 0.0 {
            0.0
        } else {
            numerator / (self.no_purchase + self.weight + dw)
        }
    }
}

/// ADXOpt local search under `|S| <= capacity`: starting from the empty set,
/// repeatedly apply the best improving addition, else the best exchange,
/// else the best deletion, until none improves. Each item
/// may be removed at most `removal_limit` times, by default
/// `min(C, n - C + 1)`.
pub fn adxopt_solve(
    instance: &MnlInstance,
    capacity: usize,
    removal_limit: Option<usize>,
) -> Result<SolveReport> {
    let start = Instant::now();
    if capacity == 0 {
        return Err(Error::InvalidParameter(
            "capacity must be at least 1".into(),
        ));
    }
    let n = instance.item_count();
    let limit = removal_limit
        .unwrap_or_else(|| capacity.min(n.saturating_sub(capacity) + 1))
        .max(1);
    let (p, v) = (instance.prices(), instance.utilities());
    let mut inside = vec![false; n];
    let mut removals = vec![0usize; n];
    let mut members: Vec<usize> = Vec::new();
    let mut counters = Counters::default();
    let sums = |members: &[usize]| Sums {
        numerator: members.iter().map(|&i| p[i] * v[i]).sum(),
        weight: members.iter().map(|&i| v[i]).sum(),
        no_purchase: instance.no_purchase_utility(),
    };
    loop {
        let s = sums(&members);
        let current = s.revenue_with(0.0, 0.0);
        // best improving move of the first class that has one; ties go to
        // the lowest indices
        let mut best: Option<Move> = None;
        let consider =
            |best: &mut Option<Move>, r: f64, out_idx: Option<usize>, add: Option<usize>| {
                if r > current && best.is_none_or(|b| r > b.0) {
                    *best = Some((r, out_idx, add));
                }
            };
        if members.len() < capacity {
            for j in (0..n).filter(|&j| !inside[j]) {
                counters.scored += 1;
                consider(&mut best, s.revenue_with(p[j] * v[j], v[j]), None, Some(j));
            }
        }
        if best.is_none() {
            for (idx, &i) in members.iter().enumerate() {
                if removals[i] >= limit {
                    continue;
                }
                for j in (0..n).filter(|&j| !inside[j]) {
                    counters.scored += 1;
                    consider(
                        &mut best,
                        s.revenue_with(p[j] * v[j] - p[i] * v[i], v[j] - v[i]),
                        Some(idx),
                        Some(j),
                    );
                }
            }
        }
        if best.is_none() {
            for (idx, &i) in members.iter().enumerate() {
                if removals[i] >= limit {
                    continue;
                }
                counters.scored += 1;
                consider(
                    &mut best,
                    s.revenue_with(-p[i] * v[i], -v[i]),
                    Some(idx),
                    None,
                );
            }
        }
        let Some((_, out_idx, add)) = best else {
            break;
        };
        if let Some(idx) = out_idx {
            let i = members.swap_remove(idx);
            inside[i] = false;
            removals[i] += 1;
        }
        if let Some(j) = add {
            inside[j] = true;
            members.push(j);
        }
        counters.iterations += 1;
        // keep scan order independent of the move history
        members.sort_unstable();
    }
    if members.is_empty() {
        members.push(instance.highest_priced_item());
    }
    let witness = Witness {
        members: members.iter().map(|&i| i as u32).collect(),
        index: None,
    };
    finish(instance, &witness, &counters, untimed(start), Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn exhaustive_examples() {
        let inst = MnlInstance::new(vec![1.0, 0.5], vec![0.5, 0.5], 1.0).unwrap();
        let single = FeasibleCollection::new(2, vec![vec![1]]).unwrap();
        assert_eq!(
            exhaustive_solve(&inst, &single)
                .unwrap()
                .assortment
                .members(),
            vec![1]
        );

        let tied = MnlInstance::new(vec![1.0, 1.0], vec![0.5, 0.5], 1.0).unwrap();
        let coll = FeasibleCollection::new(2, vec![vec![1], vec![0]]).unwrap();
        assert_eq!(
            exhaustive_solve(&tied, &coll).unwrap().assortment_index,
            Some(0)
        );

        let coll = FeasibleCollection::new(2, vec![vec![0], vec![1], vec![0, 1]]).unwrap();
        let r = exhaustive_solve(&inst, &coll).unwrap();
        assert_eq!(r.assortment_index, Some(2));
        assert!((r.revenue - 0.375).abs() < 1e-15);
    }

    #[test]
    fn adxopt_capacitated_example() {
        let inst =
            MnlInstance::new(vec![1.0, 0.9, 0.2, 0.1], vec![0.1, 1.0, 1.0, 1.0], 1.0).unwrap();
        let oracle = exhaustive_capacitated(&inst, &CapacityConstraint::upper_bound(2)).unwrap();
        let greedy = adxopt_solve(&inst, 2, None).unwrap();
        assert!((greedy.revenue - oracle.revenue).abs() < 1e-12);
    }

    #[test]
    fn adxopt_single_item_capacity() {
        for seed in 0..30 {
            let mut rng = crate::seed::rng(seed);
            let n = rng.random_range(1..15);
            let inst = MnlInstance::new(
                (0..n).map(|_| rng.random_range(0.1..10.0)).collect(),
                (0..n).map(|_| rng.random_range(0.01..1.0)).collect(),
                1.0,
            )
            .unwrap();
            let best = (0..n as u32)
                .map(|i| inst.revenue_of(&[i]))
                .fold(0.0, f64::max);
            let r = adxopt_solve(&inst, 1, None).unwrap();
            assert_eq!(r.assortment.len(), 1);
            assert!((r.revenue - best).abs() < 1e-12);
        }
    }

    #[test]
    fn adxopt_output_is_nonempty() {
        let inst = MnlInstance::new(vec![2.0, 1.0, 3.0], vec![0.3, 0.9, 0.6], 0.5).unwrap();
        assert!(!adxopt_solve(&inst, 2, Some(1))
            .unwrap()
            .assortment
            .is_empty());
        assert!(adxopt_solve(&inst, 0, None).is_err());
    }

    #[test]
    fn exhaustive_capacitated_respects_constraint() {
        let inst =
            MnlInstance::new(vec![1.0, 0.2, 0.9, 0.3], vec![0.2, 1.0, 0.5, 0.8], 1.0).unwrap();
        let c = CapacityConstraint::size_window(3, 3);
        let r = exhaustive_capacitated(&inst, &c).unwrap();
        assert_eq!(r.assortment.len(), 3);
        assert_eq!(r.candidates_scored, 4);
    }
}
