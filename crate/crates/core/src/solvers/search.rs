//! Binary search over revenue thresholds, with exact or approximate
//! comparison steps.

use std::time::Instant;

use super::capacitated::CapacityConstraint;
use super::comparator::{
    CapacityComparator, Comparator, ExactComparator, LshComparator, LshFamilyComparator, Witness,
};
use super::{MipsBackend, SolveReport};
use crate::choice::{Assortment, MnlInstance};
use crate::error::{Error, Result};
use crate::feasible::FeasibleCollection;
use crate::mips::EncodedPointSet;

/// How a step moved the search interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// No assortment reaches the threshold: `U = K`.
    Below,
    /// A witness certifies the threshold: `L = K`.
    Above,
    /// The witness only certifies the discounted threshold: `L = K_hat`.
    Discounted,
}

/// One comparison of a binary search, on the normalized scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchStep {
    /// Interval before the step.
    pub lower: f64,
    pub upper: f64,
    pub threshold: f64,
    /// Comparison value of the witness, `-inf` without one.
    pub value: f64,
    pub outcome: StepOutcome,
    /// Revenue of the incumbent after the step.
    pub incumbent_revenue: f64,
}

/// `ceil(log2(1 / epsilon))`, the step cap of the plain search.
pub fn iteration_bound(epsilon: f64) -> usize {
    ceil_log2_inv(epsilon)
}

/// Step cap of the discounted search, `ceil(log2(1 / (eps - 2(nu^2 + 2 nu))))`.
pub fn approx_iteration_bound(epsilon: f64, nu: f64) -> Result<usize> {
    check_approx(epsilon, nu)?;
    Ok(ceil_log2_inv(epsilon - 2.0 * (nu * nu + 2.0 * nu)))
}

fn ceil_log2_inv(x: f64) -> usize {
    let l = (1.0 / x).log2();
    let r = l.round();
    if (l - r).abs() < 1e-12 {
        r.max(0.0) as usize
    } else {
        l.ceil().max(0.0) as usize
    }
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )))
    }
}

fn check_approx(epsilon: f64, nu: f64) -> Result<()> {
    check_epsilon(epsilon)?;
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "nu must be nonnegative, got {nu}"
        )));
    }
    let slack = epsilon - 2.0 * (nu * nu + 2.0 * nu);
    if slack <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "epsilon {epsilon} leaves no room for nu {nu}: eps - 2(nu^2 + 2 nu) = {slack}"
        )));
    }
    Ok(())
}

/// Tracks the best witness seen; it is only replaced by a strictly better one.
#[derive(Debug, Clone)]
pub(crate) struct Incumbent {
    pub witness: Witness,
    pub revenue: f64,
}

impl Incumbent {
    pub fn new(instance: &MnlInstance, witness: Witness) -> Self {
        let revenue = instance.revenue_of(&witness.members);
        Incumbent { witness, revenue }
    }

    /// Offers a candidate; returns its revenue.
    pub fn offer(&mut self, instance: &MnlInstance, witness: &Witness) -> f64 {
        let revenue = instance.revenue_of(&witness.members);
        if revenue > self.revenue {
            self.witness = witness.clone();
            self.revenue = revenue;
        }
        revenue
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Counters {
    pub iterations: usize,
    pub probes: usize,
    pub scored: usize,
}

pub(crate) struct Timing {
    pub start: Instant,
    pub prior_nanos: u64,
    pub build_nanos: u64,
}

pub(crate) fn finish(
    original: &MnlInstance,
    best: &Witness,
    counters: &Counters,
    timing: Timing,
    steps: Vec<SearchStep>,
) -> Result<SolveReport> {
    let assortment = Assortment::from_items(
        original.item_count(),
        best.members.iter().map(|&i| i as usize),
    )?;
    let revenue = original.revenue_of(&best.members);
    Ok(SolveReport {
        assortment,
        assortment_index: best.index,
        revenue,
        iterations: counters.iterations,
        comparator_probes: counters.probes,
        candidates_scored: counters.scored,
        wall_time_nanos: timing.prior_nanos + timing.start.elapsed().as_nanos() as u64,
        index_build_nanos: timing.build_nanos,
        steps,
    })
}

/// Plain (`nu = None`) or discounted binary search on `[0, 1]`.
fn bisect(
    instance: &MnlInstance,
    incumbent: &mut Incumbent,
    epsilon: f64,
    nu: Option<f64>,
    comparator: &mut dyn Comparator,
    counters: &mut Counters,
) -> Result<Vec<SearchStep>> {
    let v0 = instance.no_purchase_utility();
    let discount = nu.map_or(0.0, |nu| nu * nu + 2.0 * nu);
    let (mut lower, mut upper) = (0.0f64, 1.0f64);
    let mut steps = Vec::new();
    while upper - lower > epsilon {
        let k = 0.5 * (lower + upper);
        if !(k > lower && k < upper) {
            break;
        }
        // 1 + (1 + nu)^2 (K - 1), written so that nu = 0 gives K exactly
        let k_hat = k - discount * (1.0 - k);
        let probe = comparator.probe(counters.iterations, k)?;
        counters.iterations += 1;
        counters.probes += 1;
        counters.scored += probe.scored;
        let step_lower = lower;
        let step_upper = upper;
        let outcome = match &probe.witness {
            Some(w) if probe.value >= k_hat * v0 => {
                incumbent.offer(instance, w);
                if probe.value >= k * v0 {
                    lower = k;
                    StepOutcome::Above
                } else {
                    lower = lower.max(k_hat);
                    StepOutcome::Discounted
                }
            }
            _ => {
                upper = k;
                StepOutcome::Below
            }
        };
        steps.push(SearchStep {
            lower: step_lower,
            upper: step_upper,
            threshold: k,
            value: probe.value,
            outcome,
            incumbent_revenue: incumbent.revenue,
        });
    }
    Ok(steps)
}

/// A normalized instance with its encoded collection, ready for repeated
/// solves with different comparators.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    original: &'a MnlInstance,
    normalized: MnlInstance,
    points: EncodedPointSet,
    encode_nanos: u64,
}

impl<'a> Problem<'a> {
    pub fn new(instance: &'a MnlInstance, collection: &FeasibleCollection) -> Result<Self> {
        let start = Instant::now();
        let (normalized, _) = instance.normalize()?;
        let points = EncodedPointSet::encode(&normalized, collection)?;
        Ok(Problem {
            original: instance,
            normalized,
            points,
            encode_nanos: start.elapsed().as_nanos() as u64,
        })
    }

    pub fn original(&self) -> &MnlInstance {
        self.original
    }

    pub fn normalized(&self) -> &MnlInstance {
        &self.normalized
    }

    /// Original maximum price.
    pub fn scale(&self) -> f64 {
        self.original.max_price()
    }

    pub fn points(&self) -> &EncodedPointSet {
        &self.points
    }

    pub fn encode_nanos(&self) -> u64 {
        self.encode_nanos
    }

    pub fn exact_comparator(&self) -> ExactComparator<'_> {
        ExactComparator::new(&self.normalized, &self.points)
    }

    /// Comparator for `backend`. With `independent`, LSH steps each use
    /// their own index.
    pub fn comparator(
        &self,
        backend: &MipsBackend,
        independent: bool,
    ) -> Result<Box<dyn Comparator + '_>> {
        Ok(match backend {
            MipsBackend::Exact => Box::new(self.exact_comparator()),
            MipsBackend::Lsh(params) if independent => Box::new(LshFamilyComparator::new(
                &self.normalized,
                &self.points,
                params,
            )?),
            MipsBackend::Lsh(params) => {
                Box::new(LshComparator::new(&self.normalized, &self.points, params)?)
            }
        })
    }

    /// The first assortment of the collection.
    pub(crate) fn initial_witness(&self) -> Witness {
        Witness {
            members: self.points.members(0).to_vec(),
            index: Some(0),
        }
    }

    pub(crate) fn timing(&self, start: Instant, comparator: &dyn Comparator) -> Timing {
        Timing {
            start,
            prior_nanos: self.encode_nanos + comparator.build_nanos(),
            build_nanos: 0,
        }
    }

    fn run(
        &self,
        epsilon: f64,
        nu: Option<f64>,
        comparator: &mut dyn Comparator,
    ) -> Result<SolveReport> {
        let start = Instant::now();
        let mut timing = self.timing(start, comparator);
        let mut incumbent = Incumbent::new(&self.normalized, self.initial_witness());
        let mut counters = Counters::default();
        let steps = bisect(
            &self.normalized,
            &mut incumbent,
            epsilon,
            nu,
            comparator,
            &mut counters,
        )?;
        timing.build_nanos = self.encode_nanos + comparator.build_nanos();
        finish(self.original, &incumbent.witness, &counters, timing, steps)
    }

    /// Plain binary search; `comparator` decides whether this is the exact
    /// algorithm or its simplified approximate variant.
    pub fn bisect(&self, epsilon: f64, comparator: &mut dyn Comparator) -> Result<SolveReport> {
        check_epsilon(epsilon)?;
        self.run(epsilon, None, comparator)
    }

    /// Binary search with the `(1 + nu)^2` discounted update.
    pub fn bisect_approx(
        &self,
        epsilon: f64,
        nu: f64,
        comparator: &mut dyn Comparator,
    ) -> Result<SolveReport> {
        check_approx(epsilon, nu)?;
        self.run(epsilon, Some(nu), comparator)
    }
}

fn solve_with(
    instance: &MnlInstance,
    collection: &FeasibleCollection,
    backend: &MipsBackend,
    run: impl FnOnce(&Problem<'_>, &mut dyn Comparator) -> Result<SolveReport>,
) -> Result<SolveReport> {
    let problem = Problem::new(instance, collection)?;
    let mut comparator = problem.comparator(backend, false)?;
    run(&problem, &mut comparator)
}

/// Binary search with comparisons answered by `backend`.
pub fn assort_mnl(
    instance: &MnlInstance,
    collection: &FeasibleCollection,
    epsilon: f64,
    backend: &MipsBackend,
) -> Result<SolveReport> {
    check_epsilon(epsilon)?;
    solve_with(instance, collection, backend, |p, c| p.bisect(epsilon, c))
}

/// Binary search that accounts for `(1 + nu)^2`-approximate comparisons.
pub fn assort_mnl_approx(
    instance: &MnlInstance,
    collection: &FeasibleCollection,
    epsilon: f64,
    nu: f64,
    backend: &MipsBackend,
) -> Result<SolveReport> {
    check_approx(epsilon, nu)?;
    solve_with(instance, collection, backend, |p, c| {
        p.bisect_approx(epsilon, nu, c)
    })
}

/// Plain binary search driven by approximate comparisons, without any
/// correction for their error.
pub fn assort_mnl_approx_simple(
    instance: &MnlInstance,
    collection: &FeasibleCollection,
    epsilon: f64,
    backend: &MipsBackend,
) -> Result<SolveReport> {
    assort_mnl(instance, collection, epsilon, backend)
}

/// Binary search over a capacity-constrained family.
pub fn assort_mnl_capacitated(
    instance: &MnlInstance,
    constraint: &CapacityConstraint,
    epsilon: f64,
) -> Result<SolveReport> {
    check_epsilon(epsilon)?;
    let start = Instant::now();
    constraint.validate(instance.item_count())?;
    let (normalized, _) = instance.normalize()?;
    let mut comparator = CapacityComparator::new(&normalized, constraint);
    let mut counters = Counters::default();
    let first = comparator.probe(0, 0.0)?;
    counters.probes += 1;
    counters.scored += first.scored;
    let initial = first
        .witness
        .expect("capacity comparator always returns a witness");
    let mut incumbent = Incumbent::new(&normalized, initial);
    let steps = bisect(
        &normalized,
        &mut incumbent,
        epsilon,
        None,
        &mut comparator,
        &mut counters,
    )?;
    let timing = Timing {
        start,
        prior_nanos: 0,
        build_nanos: 0,
    };
    finish(instance, &incumbent.witness, &counters, timing, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::comparator::Probe;
    use crate::solvers::exhaustive_solve;
    use proptest::prelude::*;
    use rand::Rng;

    fn example() -> (MnlInstance, FeasibleCollection) {
        let inst = MnlInstance::new(vec![1.0, 0.5], vec![0.5, 0.5], 1.0).unwrap();
        let coll = FeasibleCollection::new(2, vec![vec![0], vec![1], vec![0, 1]]).unwrap();
        (inst, coll)
    }

    fn random_problem(
        seed: u64,
        max_items: usize,
        max_sets: usize,
    ) -> (MnlInstance, FeasibleCollection) {
        let mut rng = crate::seed::rng(seed);
        let n = rng.random_range(2..=max_items);
        let inst = MnlInstance::new(
            (0..n).map(|_| rng.random_range(0.0..100.0)).collect(),
            (0..n).map(|_| rng.random::<f64>()).collect(),
            rng.random_range(0.0..2.0),
        )
        .unwrap();
        let count = rng.random_range(1..=max_sets);
        let sets: Vec<Vec<usize>> = (0..count)
            .map(|_| {
                let k = rng.random_range(1..=n);
                rand::seq::index::sample(&mut rng, n, k).into_vec()
            })
            .collect();
        (inst, FeasibleCollection::new(n, sets).unwrap())
    }

    fn enumerate_best(inst: &MnlInstance, coll: &FeasibleCollection) -> f64 {
        coll.iter().map(|s| inst.revenue_of(s)).fold(0.0, f64::max)
    }

    #[test]
    fn assort_mnl_example() {
        let (inst, coll) = example();
        let report = assort_mnl(&inst, &coll, 0.01, &MipsBackend::Exact).unwrap();
        assert!(report.revenue >= 0.375 - 0.01);
        assert_eq!(report.assortment.members(), vec![0, 1]);
        assert_eq!(report.assortment_index, Some(2));
        assert!(report.iterations <= 7);
    }

    #[test]
    fn single_assortment_collection() {
        let inst = MnlInstance::new(vec![3.0, 1.0, 2.0], vec![0.2, 0.9, 0.4], 1.0).unwrap();
        let coll = FeasibleCollection::new(3, vec![vec![1, 2]]).unwrap();
        for eps in [0.5, 0.1, 0.001] {
            let report = assort_mnl(&inst, &coll, eps, &MipsBackend::Exact).unwrap();
            assert_eq!(report.assortment.members(), vec![1, 2]);
        }
    }

    #[test]
    fn zero_prices_are_rejected() {
        let inst = MnlInstance::new(vec![0.0, 0.0], vec![0.5, 0.5], 1.0).unwrap();
        let coll = FeasibleCollection::new(2, vec![vec![0]]).unwrap();
        assert!(matches!(
            assort_mnl(&inst, &coll, 0.1, &MipsBackend::Exact),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn invalid_epsilon() {
        let (inst, coll) = example();
        for eps in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(assort_mnl(&inst, &coll, eps, &MipsBackend::Exact).is_err());
        }
    }

    #[test]
    fn compare_step_examples() {
        let (inst, coll) = example();
        let problem = Problem::new(&inst, &coll).unwrap();
        let mut exact = problem.exact_comparator();
        let v0 = inst.no_purchase_utility();

        let at = |c: &mut ExactComparator, k| -> Probe { c.probe(0, k).unwrap() };
        let p = at(&mut exact, 0.35);
        assert!(p.supports(0.35, v0));
        assert_eq!(p.witness.unwrap().members, vec![0, 1]);
        assert!(!at(&mut exact, 1.0).supports(1.0, v0));
        let zero = at(&mut exact, 0.0);
        assert!(zero.supports(0.0, v0));
        // argmax of sum v_i p_i
        assert_eq!(zero.witness.unwrap().members, vec![0, 1]);
    }

    #[test]
    fn zero_no_purchase_compares_against_zero() {
        let inst = MnlInstance::new(vec![1.0, 0.4], vec![0.5, 1.0], 0.0).unwrap();
        let coll = FeasibleCollection::new(2, vec![vec![1], vec![0, 1]]).unwrap();
        let report = assort_mnl(&inst, &coll, 0.01, &MipsBackend::Exact).unwrap();
        assert!(report.revenue >= enumerate_best(&inst, &coll) - 0.01);
    }

    #[test]
    fn approx_bound_example() {
        // 2 (nu^2 + 2 nu) = 0.02
        let nu = -1.0 + (1.01f64).sqrt();
        assert!((2.0 * (nu * nu + 2.0 * nu) - 0.02).abs() < 1e-15);
        assert_eq!(approx_iteration_bound(0.1, nu).unwrap(), 4);
        assert_eq!(iteration_bound(0.1), 4);
        assert_eq!(iteration_bound(0.01), 7);
        assert_eq!(iteration_bound(0.125), 3);
        assert!(approx_iteration_bound(0.1, 0.05).is_err());
    }

    #[test]
    fn approx_with_zero_nu_matches_plain_trajectory() {
        for seed in 0..30 {
            let (inst, coll) = random_problem(seed, 8, 40);
            let a = assort_mnl(&inst, &coll, 0.01, &MipsBackend::Exact).unwrap();
            let b = assort_mnl_approx(&inst, &coll, 0.01, 0.0, &MipsBackend::Exact).unwrap();
            assert_eq!(a.steps, b.steps);
            assert_eq!(a.assortment, b.assortment);
        }
    }

    #[test]
    fn approx_with_exact_backend_is_epsilon_optimal() {
        for seed in 0..50 {
            let (inst, coll) = random_problem(100 + seed, 8, 60);
            let scale = inst.max_price();
            let report = assort_mnl_approx(&inst, &coll, 0.1, 0.01, &MipsBackend::Exact).unwrap();
            assert!(report.revenue >= enumerate_best(&inst, &coll) - 0.1 * scale);
            assert!(report.iterations <= approx_iteration_bound(0.1, 0.01).unwrap());
        }
    }

    #[test]
    fn no_candidate_everywhere_returns_initial() {
        struct Silent;
        impl Comparator for Silent {
            fn probe(&mut self, _: usize, _: f64) -> Result<Probe> {
                Ok(Probe::no_candidate(0))
            }
        }
        let (inst, coll) = example();
        let problem = Problem::new(&inst, &coll).unwrap();
        let report = problem.bisect(0.1, &mut Silent).unwrap();
        assert_eq!(report.assortment_index, Some(0));
        assert!(report.steps.iter().all(|s| s.outcome == StepOutcome::Below));
        assert_eq!(report.iterations, 4);
    }

    #[test]
    fn simple_with_exact_backend_equals_assort_mnl() {
        let (inst, coll) = random_problem(7, 10, 80);
        let a = assort_mnl(&inst, &coll, 0.05, &MipsBackend::Exact).unwrap();
        let b = assort_mnl_approx_simple(&inst, &coll, 0.05, &MipsBackend::Exact).unwrap();
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.assortment, b.assortment);
    }

    #[test]
    fn capacitated_example() {
        let inst =
            MnlInstance::new(vec![1.0, 0.9, 0.2, 0.1], vec![0.1, 1.0, 1.0, 1.0], 1.0).unwrap();
        let c = CapacityConstraint::upper_bound(2);
        let report = assort_mnl_capacitated(&inst, &c, 0.001).unwrap();
        // enumeration over the ten sets of size 1 or 2
        let mut best = 0.0f64;
        for i in 0..4u32 {
            best = best.max(inst.revenue_of(&[i]));
            for j in i + 1..4 {
                best = best.max(inst.revenue_of(&[i, j]));
            }
        }
        assert!(report.revenue >= best - 0.001);
        assert!(report.assortment.len() <= 2);
    }

    #[test]
    fn capacity_at_least_n_is_unconstrained() {
        for seed in 0..20 {
            let mut rng = crate::seed::rng(seed);
            let n = rng.random_range(1..=10);
            let inst = MnlInstance::new(
                (0..n).map(|_| rng.random::<f64>()).collect(),
                (0..n).map(|_| rng.random::<f64>()).collect(),
                1.0,
            )
            .unwrap();
            let all: Vec<Vec<usize>> = (1u32..1 << n)
                .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
                .collect();
            let coll = FeasibleCollection::new(n, all).unwrap();
            let oracle = exhaustive_solve(&inst, &coll).unwrap();
            let report =
                assort_mnl_capacitated(&inst, &CapacityConstraint::upper_bound(n + 3), 0.001)
                    .unwrap();
            assert!(report.revenue >= oracle.revenue - 0.001 * inst.max_price());
        }
    }

    proptest! {
        #[test]
        fn interval_brackets_optimum_and_incumbent_improves(seed in any::<u64>(), eps in 0.001f64..0.5) {
            let (inst, coll) = random_problem(seed, 10, 50);
            let problem = Problem::new(&inst, &coll).unwrap();
            let optimum = enumerate_best(problem.normalized(), &coll);
            let report = problem.bisect(eps, &mut problem.exact_comparator()).unwrap();
            prop_assert!(report.iterations <= iteration_bound(eps));
            let mut previous = problem.normalized().revenue_of(coll.members(0));
            for step in &report.steps {
                prop_assert!(step.lower <= optimum + 1e-12 && optimum <= step.upper + 1e-12);
                prop_assert!(step.incumbent_revenue >= previous);
                previous = step.incumbent_revenue;
            }
            prop_assert!((report.revenue - inst.revenue_of(&report.assortment.members())).abs() == 0.0);
            prop_assert!(report.revenue >= enumerate_best(&inst, &coll) - eps * inst.max_price());
        }

        #[test]
        fn discounted_search_respects_its_bound(seed in any::<u64>(), nu in 0.0f64..0.02) {
            let (inst, coll) = random_problem(seed, 10, 50);
            let problem = Problem::new(&inst, &coll).unwrap();
            let report = problem.bisect_approx(0.1, nu, &mut problem.exact_comparator()).unwrap();
            prop_assert!(report.iterations <= approx_iteration_bound(0.1, nu).unwrap());
            let mut previous = 0.0;
            for step in &report.steps {
                prop_assert!(step.incumbent_revenue >= previous);
                previous = step.incumbent_revenue;
                let k_hat = 1.0 + (1.0 + nu).powi(2) * (step.threshold - 1.0);
                prop_assert!(k_hat <= step.threshold + 1e-15);
            }
        }
    }
}
