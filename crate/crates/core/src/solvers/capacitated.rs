//! Capacity-constrained feasible families.
//!
//! For these families the comparison step needs no index: the best
//! assortment for weights `w_i = v_i (p_i - K)` is a top-`C` selection.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// A feasible family described by cardinality limits instead of an explicit
/// collection. Every family excludes the empty set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CapacityConstraint {
    /// `1 <= |S| <= capacity`.
    UpperBound { capacity: usize },
    /// `max(min, 1) <= |S| <= max`.
    SizeWindow { min: usize, max: usize },
    /// At most `caps[k]` items from block `k`; blocks are disjoint and cover
    /// every item.
    Partition {
        blocks: Vec<Vec<u32>>,
        caps: Vec<usize>,
    },
    /// At least `min_overlap` items of `reference` plus at most
    /// `residual_cap` items outside it.
    Reference {
        reference: Vec<u32>,
        min_overlap: usize,
        residual_cap: usize,
    },
}

// descending weight, then ascending item
fn by_weight(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Moves the `forced` heaviest candidates into `out` regardless of sign, then
/// up to `cap - forced` further positive ones. Returns their total weight.
fn pick(cands: &mut [(f64, u32)], forced: usize, cap: usize, out: &mut Vec<u32>) -> f64 {
    let mut total = 0.0;
    let forced = forced.min(cands.len());
    let rest: &mut [(f64, u32)] = if forced > 0 {
        if forced < cands.len() {
            cands.select_nth_unstable_by(forced - 1, by_weight);
        }
        for &(w, i) in &cands[..forced] {
            total += w;
            out.push(i);
        }
        &mut cands[forced..]
    } else {
        cands
    };
    let room = cap.saturating_sub(forced);
    if room == 0 {
        return total;
    }
    let mut positive: Vec<(f64, u32)> = rest.iter().copied().filter(|c| c.0 > 0.0).collect();
    if positive.len() > room {
        positive.select_nth_unstable_by(room - 1, by_weight);
        positive.truncate(room);
    }
    for (w, i) in positive {
        total += w;
        out.push(i);
    }
    total
}

impl CapacityConstraint {
    pub fn upper_bound(capacity: usize) -> Self {
        CapacityConstraint::UpperBound { capacity }
    }

    pub fn size_window(min: usize, max: usize) -> Self {
        CapacityConstraint::SizeWindow { min, max }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let check_items = |items: &[u32]| -> Result<()> {
            match items.iter().find(|&&i| i as usize >= n) {
                Some(&bad) => Err(Error::ItemOutOfRange {
                    item: bad as usize,
                    n,
                }),
                None => Ok(()),
            }
        };
        match self {
            CapacityConstraint::UpperBound { capacity } => {
                if *capacity == 0 {
                    return Err(Error::InvalidParameter(
                        "capacity must be at least 1".into(),
                    ));
                }
            }
            CapacityConstraint::SizeWindow { min, max } => {
                if *max == 0 {
                    return Err(Error::InvalidParameter(
                        "capacity must be at least 1".into(),
                    ));
                }
                if min > max {
                    return Err(Error::Infeasible(format!(
                        "size window lower bound {min} exceeds upper bound {max}"
                    )));
                }
                if *min > n {
                    return Err(Error::Infeasible(format!(
                        "size window lower bound {min} exceeds the {n} available items"
                    )));
                }
            }
            CapacityConstraint::Partition { blocks, caps } => {
                if blocks.len() != caps.len() {
                    return Err(Error::InvalidParameter(format!(
                        "{} blocks but {} caps",
                        blocks.len(),
                        caps.len()
                    )));
                }
                if caps.contains(&0) {
                    return Err(Error::InvalidParameter(
                        "block caps must be at least 1".into(),
                    ));
                }
                let mut seen = vec![false; n];
                for block in blocks {
                    check_items(block)?;
                    for &i in block {
                        if std::mem::replace(&mut seen[i as usize], true) {
                            return Err(Error::InvalidParameter(format!(
                                "item {i} appears in more than one block"
                            )));
                        }
                    }
                }
                if let Some(missing) = seen.iter().position(|s| !s) {
                    return Err(Error::InvalidParameter(format!(
                        "item {missing} is not covered by any block"
                    )));
                }
            }
            CapacityConstraint::Reference {
                reference,
                min_overlap,
                residual_cap,
            } => {
                check_items(reference)?;
                let mut sorted = reference.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != reference.len() {
                    return Err(Error::InvalidParameter(
                        "reference assortment lists an item twice".into(),
                    ));
                }
                if *min_overlap > reference.len() {
                    return Err(Error::Infeasible(format!(
                        "minimum overlap {min_overlap} exceeds the reference size {}",
                        reference.len()
                    )));
                }
                if reference.is_empty() && *residual_cap == 0 {
                    return Err(Error::Infeasible(
                        "empty reference with no residual capacity admits nothing".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Whether the member list (distinct, in range) belongs to the family.
    pub fn admits(&self, members: &[u32]) -> bool {
        if members.is_empty() {
            return false;
        }
        match self {
            CapacityConstraint::UpperBound { capacity } => members.len() <= *capacity,
            CapacityConstraint::SizeWindow { min, max } => {
                members.len() >= *min && members.len() <= *max
            }
            CapacityConstraint::Partition { blocks, caps } => blocks
                .iter()
                .zip(caps)
                .all(|(block, &cap)| members.iter().filter(|i| block.contains(i)).count() <= cap),
            CapacityConstraint::Reference {
                reference,
                min_overlap,
                residual_cap,
            } => {
                let inside = members.iter().filter(|i| reference.contains(i)).count();
                inside >= *min_overlap && members.len() - inside <= *residual_cap
            }
        }
    }

    /// Best member of the family for item weights `weights`, as sorted
    /// members and total weight.
    pub(crate) fn select(&self, weights: &[f64]) -> (Vec<u32>, f64) {
        let mut out = Vec::new();
        let all = || -> Vec<(f64, u32)> {
            weights
                .iter()
                .enumerate()
                .map(|(i, &w)| (w, i as u32))
                .collect()
        };
        let mut total = match self {
            CapacityConstraint::UpperBound { capacity } => pick(&mut all(), 0, *capacity, &mut out),
            CapacityConstraint::SizeWindow { min, max } => pick(&mut all(), *min, *max, &mut out),
            CapacityConstraint::Partition { blocks, caps } => {
                let mut total = 0.0;
                for (block, &cap) in blocks.iter().zip(caps) {
                    let mut cands: Vec<(f64, u32)> =
                        block.iter().map(|&i| (weights[i as usize], i)).collect();
                    total += pick(&mut cands, 0, cap, &mut out);
                }
                total
            }
            CapacityConstraint::Reference {
                reference,
                min_overlap,
                residual_cap,
            } => {
                let mut inside = vec![false; weights.len()];
                for &i in reference {
                    inside[i as usize] = true;
                }
                let mut cands: Vec<(f64, u32)> = reference
                    .iter()
                    .map(|&i| (weights[i as usize], i))
                    .collect();
                let mut total = pick(&mut cands, *min_overlap, reference.len(), &mut out);
                let mut rest: Vec<(f64, u32)> = all()
                    .into_iter()
                    .filter(|c| !inside[c.1 as usize])
                    .collect();
                total += pick(&mut rest, 0, *residual_cap, &mut out);
                total
            }
        };
        if out.is_empty() {
            // nothing positive: the best nonempty member is a singleton
            let (w, i) = self.best_singleton(weights);
            out.push(i);
            total = w;
        }
        out.sort_unstable();
        (out, total)
    }

    fn best_singleton(&self, weights: &[f64]) -> (f64, u32) {
        weights
            .iter()
            .enumerate()
            .map(|(i, &w)| (w, i as u32))
            .filter(|&(_, i)| self.admits(&[i]))
            .min_by(by_weight)
            .expect("a family with an empty selection admits a singleton")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn subsets(n: usize) -> impl Iterator<Item = Vec<u32>> {
        (1u32..1 << n).map(move |mask| (0..n as u32).filter(|i| mask >> i & 1 == 1).collect())
    }

    fn brute(c: &CapacityConstraint, w: &[f64]) -> f64 {
        subsets(w.len())
            .filter(|s| c.admits(s))
            .map(|s| s.iter().map(|&i| w[i as usize]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn upper_bound_picks_top_positive() {
        let c = CapacityConstraint::upper_bound(2);
        let (members, value) = c.select(&[0.3, -1.0, 0.5, 0.1]);
        assert_eq!(members, vec![0, 2]);
        assert!((value - 0.8).abs() < 1e-15);
        let (members, value) = c.select(&[-0.3, -1.0, -0.5]);
        assert_eq!(members, vec![0]);
        assert_eq!(value, -0.3);
    }

    #[test]
    fn size_window_forces_lower_bound() {
        let c = CapacityConstraint::size_window(3, 4);
        let (members, value) = c.select(&[0.3, -1.0, 0.5, -0.1, -0.2]);
        assert_eq!(members, vec![0, 2, 3]);
        assert!((value - 0.7).abs() < 1e-15);
    }

    #[test]
    fn single_block_partition_is_upper_bound() {
        let w = [0.2, 0.9, -0.4, 0.7, 0.1];
        let p = CapacityConstraint::Partition {
            blocks: vec![vec![0, 1, 2, 3, 4]],
            caps: vec![3],
        };
        assert_eq!(p.select(&w), CapacityConstraint::upper_bound(3).select(&w));
    }

    #[test]
    fn validation() {
        assert!(CapacityConstraint::upper_bound(0).validate(3).is_err());
        assert!(matches!(
            CapacityConstraint::size_window(4, 5).validate(3),
            Err(Error::Infeasible(_))
        ));
        assert!(CapacityConstraint::size_window(3, 2).validate(5).is_err());
        let overlapping = CapacityConstraint::Partition {
            blocks: vec![vec![0, 1], vec![1, 2]],
            caps: vec![1, 1],
        };
        assert!(overlapping.validate(3).is_err());
        let uncovered = CapacityConstraint::Partition {
            blocks: vec![vec![0, 1]],
            caps: vec![1],
        };
        assert!(uncovered.validate(3).is_err());
        let reference = CapacityConstraint::Reference {
            reference: vec![0, 5],
            min_overlap: 1,
            residual_cap: 1,
        };
        assert!(matches!(
            reference.validate(3),
            Err(Error::ItemOutOfRange { .. })
        ));
    }

    fn arb_constraint(n: usize) -> impl Strategy<Value = CapacityConstraint> {
        let upper = (1..=n).prop_map(CapacityConstraint::upper_bound);
        let window = (0..=n, 1..=n).prop_map(|(a, b)| CapacityConstraint::size_window(a.min(b), b));
        let partition = (
            proptest::collection::vec(0..3usize, n),
            proptest::collection::vec(1..4usize, 3),
        )
            .prop_map(move |(labels, caps)| {
                let count = n.min(3);
                // the first `count` items seed one block each
                let label = |i: usize| if i < count { i } else { labels[i] % count };
                let blocks: Vec<Vec<u32>> = (0..count)
                    .map(|b| (0..n as u32).filter(|&i| label(i as usize) == b).collect())
                    .collect();
                CapacityConstraint::Partition {
                    blocks,
                    caps: caps[..count].to_vec(),
                }
            });
        let reference = (
            proptest::collection::vec(any::<bool>(), n),
            0..4usize,
            0..4usize,
        )
            .prop_filter_map("feasible reference", move |(mask, k, r)| {
                let reference: Vec<u32> = (0..n as u32).filter(|&i| mask[i as usize]).collect();
                let c = CapacityConstraint::Reference {
                    min_overlap: k.min(reference.len()),
                    reference,
                    residual_cap: r,
                };
                c.validate(n).ok().map(|_| c)
            });
        prop_oneof![upper, window, partition, reference]
    }

    proptest! {
        #[test]
        fn selection_matches_brute_force(
            (w, c) in (1usize..=10).prop_flat_map(|n| {
                (proptest::collection::vec(-1.0f64..1.0, n), arb_constraint(n))
            })
        ) {
            prop_assert!(c.validate(w.len()).is_ok());
            let (members, value) = c.select(&w);
            prop_assert!(c.admits(&members));
            let recomputed: f64 = members.iter().map(|&i| w[i as usize]).sum();
            prop_assert!((recomputed - value).abs() < 1e-12);
            prop_assert!((value - brute(&c, &w)).abs() < 1e-12);
        }
    }
}
