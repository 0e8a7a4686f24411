//! Noisy binary search with a binned posterior over the optimal revenue.
//!
//! The posterior lives on `bins` equal bins covering `[0, 1]`. Each step
//! draws a threshold at one edge of the median bin, asks the comparator,
//! and reweights the bins on either side of the threshold assuming the
//! answer is wrong with probability `alpha`.

use std::time::Instant;

use rand::Rng;

use super::comparator::Comparator;
use super::search::{check_epsilon, finish, Counters, Incumbent, Problem, Timing};
use super::{MipsBackend, SolveReport};
use crate::choice::MnlInstance;
use crate::error::{Error, Result};
use crate::feasible::FeasibleCollection;
use crate::seed;

const MASS_TOLERANCE: f64 = 1e-9;

/// Piecewise-constant posterior, `weights[i]` being the mass of bin
/// `(i * width, (i + 1) * width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BzPosterior {
    weights: Vec<f64>,
    bin_width: f64,
}

fn bin_count(epsilon: f64) -> usize {
    let r = 1.0 / epsilon;
    let nearest = r.round();
    if (r - nearest).abs() < 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        r.ceil() as usize
    }
}

impl BzPosterior {
    /// `ceil(1 / epsilon)` bins of equal weight; the bin width, and with it
    /// the effective tolerance, is `1 / bins <= epsilon`.
    pub fn uniform(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let bins = bin_count(epsilon);
        let width = 1.0 / bins as f64;
        Ok(BzPosterior {
            weights: vec![width; bins],
            bin_width: width,
        })
    }

    pub fn bin_count(&self) -> usize {
        self.weights.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `(u, mass before u)` for the 1-based median bin `u`: the mass of bins
    /// `1..u-1` is at most one half and the mass through `u` exceeds it.
    pub fn median_bin(&self) -> (usize, f64) {
        let half = 0.5 * self.total();
        let mut before = 0.0;
        for (i, &a) in self.weights.iter().enumerate() {
            // tolerance keeps exact halves (the uniform start) on the right side
            if before + a - half > 1e-12 {
                return (i + 1, before);
            }
            before += a;
        }
        let last = self.weights.len();
        (last, before - self.weights[last - 1])
    }

    /// Median bin `u` and the probability `Q` of thresholding at its lower
    /// edge `(u - 1) * width` rather than its upper edge `u * width`.
    pub fn threshold_choice(&self) -> (usize, f64) {
        let total = self.total();
        let (u, before) = self.median_bin();
        let through = before + self.weights[u - 1];
        let tau1 = (total - before) - before;
        let tau2 = through - (total - through);
        let q = if tau1 + tau2 > 0.0 {
            tau2 / (tau1 + tau2)
        } else {
            0.5
        };
        (u, q.clamp(0.0, 1.0))
    }

    /// Reweights after observing `h = observation` at the threshold
    /// `split * width`. Bins `1..=split` lie below it.
    pub fn update(&mut self, split: usize, observation: bool, alpha: f64) {
        debug_assert!(split <= self.weights.len());
        let beta = 1.0 - alpha;
        let total = self.total();
        let below: f64 = self.weights[..split].iter().sum();
        let tau = (below - (total - below)) / total;
        let (low, high) = if observation {
            let d = 1.0 - tau * (beta - alpha);
            (2.0 * alpha / d, 2.0 * beta / d)
        } else {
            let d = 1.0 + tau * (beta - alpha);
            (2.0 * beta / d, 2.0 * alpha / d)
        };
        for (i, a) in self.weights.iter_mut().enumerate() {
            *a *= if i < split { low } else { high };
        }
        debug_assert!((self.total() - 1.0).abs() <= MASS_TOLERANCE);
    }

    /// Median of the piecewise-uniform density.
    pub fn median(&self) -> f64 {
        let (u, before) = self.median_bin();
        let a = self.weights[u - 1];
        let frac = if a > 0.0 {
            ((0.5 * self.total() - before) / a).clamp(0.0, 1.0)
        } else {
            0.0
        };
        self.bin_width * ((u - 1) as f64 + frac)
    }
}

/// Number of steps to run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BzSteps {
    Fixed(usize),
    /// Enough steps to fail with probability at most `gamma` when every
    /// comparison errs with probability at most `p_max < 1/4`.
    Confidence {
        gamma: f64,
        p_max: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BzConfig {
    pub epsilon: f64,
    /// Assumed comparison error rate, in `(0, 1/2)`.
    pub alpha: f64,
    pub steps: BzSteps,
    pub seed: u64,
}

impl Default for BzConfig {
    fn default() -> Self {
        BzConfig {
            epsilon: 0.1,
            alpha: 0.1,
            steps: BzSteps::Confidence {
                gamma: 0.1,
                p_max: 0.09,
            },
            seed: 0,
        }
    }
}

impl BzConfig {
    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 0.5), got {}",
                self.alpha
            )));
        }
        self.step_count().map(|_| ())
    }

    pub fn step_count(&self) -> Result<usize> {
        match self.steps {
            BzSteps::Fixed(t) => Ok(t),
            BzSteps::Confidence { gamma, p_max } => confidence_steps(
                BzPosterior::uniform(self.epsilon)?.bin_width(),
                gamma,
                p_max,
            ),
        }
    }
}

/// `ceil(log_{1/2 + sqrt(p_max)} (gamma * eps / (1 - eps)))`.
pub fn confidence_steps(epsilon: f64, gamma: f64, p_max: f64) -> Result<usize> {
    if !(p_max >= 0.0 && p_max < 0.25) {
        return Err(Error::InvalidParameter(format!(
            "p_max must lie in [0, 0.25), got {p_max}"
        )));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    check_epsilon(epsilon)?;
    let base = 0.5 + p_max.sqrt();
    let target = gamma * epsilon / (1.0 - epsilon);
    Ok((target.ln() / base.ln()).ceil().max(0.0) as usize)
}

/// `((1 - eps) / eps) * (p / (2 alpha) + (1 - p) / (2 (1 - alpha)))^T`, the
/// probability bound on missing the optimum by more than `eps` after `T`
/// steps with error rate `p`.
pub fn failure_bound(epsilon: f64, p: f64, alpha: f64, steps: usize) -> f64 {
    let rate = p / (2.0 * alpha) + (1.0 - p) / (2.0 * (1.0 - alpha));
    (1.0 - epsilon) / epsilon * rate.powi(steps as i32)
}

/// One step of the noisy search, on the normalized scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BzStep {
    pub threshold: f64,
    pub observation: bool,
    /// Posterior median after the update.
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BzReport {
    pub report: SolveReport,
    /// `max(median, R(S_hat))` in the input's price units.
    pub theta_hat: f64,
    /// Final posterior median in the input's price units.
    pub median: f64,
    /// Bin width actually used, normalized.
    pub effective_epsilon: f64,
    pub posterior: BzPosterior,
    pub steps: Vec<BzStep>,
}

impl Problem<'_> {
    /// Runs the noisy search with `comparator`; step `j` is issued as
    /// iteration `j`.
    pub fn bz(&self, config: &BzConfig, comparator: &mut dyn Comparator) -> Result<BzReport> {
        config.validate()?;
        let start = Instant::now();
        let timing = self.timing(start, comparator);
        let incumbent = Incumbent::new(self.normalized(), self.initial_witness());
        let mut run = run_bz(self.normalized(), incumbent, config, comparator)?;
        let timing = Timing {
            build_nanos: self.encode_nanos() + comparator.build_nanos(),
            ..timing
        };
        let report = finish(
            self.original(),
            &run.incumbent.witness,
            &run.counters,
            timing,
            Vec::new(),
        )?;
        let scale = self.scale();
        run.theta_hat = run.theta_hat.max(run.incumbent.revenue);
        Ok(BzReport {
            report,
            theta_hat: run.theta_hat * scale,
            median: run.posterior.median() * scale,
            effective_epsilon: run.posterior.bin_width(),
            posterior: run.posterior,
            steps: run.steps,
        })
    }
}

struct BzRun {
    incumbent: Incumbent,
    posterior: BzPosterior,
    counters: Counters,
    steps: Vec<BzStep>,
    theta_hat: f64,
}

fn run_bz(
    instance: &MnlInstance,
    mut incumbent: Incumbent,
    config: &BzConfig,
    comparator: &mut dyn Comparator,
) -> Result<BzRun> {
    let v0 = instance.no_purchase_utility();
    let mut posterior = BzPosterior::uniform(config.epsilon)?;
    let width = posterior.bin_width();
    let steps_total = config.step_count()?;
    let mut rng = seed::rng(seed::derive(config.seed, seed::BZ_THRESHOLD));
    let mut counters = Counters::default();
    let mut steps = Vec::with_capacity(steps_total);
    for j in 0..steps_total {
        let (u, q) = posterior.threshold_choice();
        let split = if rng.random::<f64>() < q { u - 1 } else { u };
        let k = width * split as f64;
        let probe = comparator.probe(j, k)?;
        counters.iterations += 1;
        counters.probes += 1;
        counters.scored += probe.scored;
        if let Some(w) = &probe.witness {
            if instance.revenue_of(&w.members) > k {
                incumbent.offer(instance, w);
            }
        }
        let observation = probe.supports(k, v0);
        posterior.update(split, observation, config.alpha);
        steps.push(BzStep {
            threshold: k,
            observation,
            median: posterior.median(),
        });
    }
    let theta_hat = posterior.median();
    Ok(BzRun {
        incumbent,
        posterior,
        counters,
        steps,
        theta_hat,
    })
}

/// Noisy binary search; with an LSH backend every step queries its own
/// independently seeded index.
pub fn assort_mnl_bz(
    instance: &MnlInstance,
    collection: &FeasibleCollection,
    config: &BzConfig,
    backend: &MipsBackend,
) -> Result<BzReport> {
    config.validate()?;
    let problem = Problem::new(instance, collection)?;
    let mut comparator = problem.comparator(backend, true)?;
    problem.bz(config, &mut comparator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::comparator::NoisyComparator;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn initial_weights_equal_epsilon() {
        let p = BzPosterior::uniform(0.1).unwrap();
        assert_eq!(p.bin_count(), 10);
        assert!(p.weights().iter().all(|&a| a == 0.1));
        let p = BzPosterior::uniform(0.3).unwrap();
        assert_eq!(p.bin_count(), 4);
        assert_eq!(p.bin_width(), 0.25);
        assert_eq!(BzPosterior::uniform(0.01).unwrap().bin_count(), 100);
    }

    #[test]
    fn uniform_posterior_median_and_choice() {
        let p = BzPosterior::uniform(0.1).unwrap();
        // mass through bin 5 is exactly one half, so u = 6
        let (u, before) = p.median_bin();
        assert_eq!(u, 6);
        assert!((before - 0.5).abs() < 1e-12);
        let (_, q) = p.threshold_choice();
        // tau1 = 0, tau2 = 0.2
        assert!((q - 1.0).abs() < 1e-12);
        assert!((p.median() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn confidence_steps_example() {
        assert_eq!(confidence_steps(0.1, 0.1, 0.09).unwrap(), 21);
        assert!(confidence_steps(0.1, 0.1, 0.25).is_err());
        let bound = failure_bound(0.1, 0.05, 0.1, 21);
        assert!(bound < 0.05 && bound > 0.04);
    }

    #[test]
    fn alpha_is_validated() {
        for alpha in [0.0, 0.5, 0.7] {
            let c = BzConfig {
                alpha,
                ..BzConfig::default()
            };
            assert!(c.validate().is_err());
        }
    }

    fn small_problem(seed: u64) -> (MnlInstance, FeasibleCollection) {
        let mut rng = seed::rng(seed);
        let n = rng.random_range(2..8);
        let inst = MnlInstance::new(
            (0..n).map(|_| rng.random_range(0.0..10.0)).collect(),
            (0..n).map(|_| rng.random::<f64>()).collect(),
            rng.random_range(0.1..1.0),
        )
        .unwrap();
        let sets: Vec<Vec<usize>> = (0..20)
            .map(|_| {
                let k = rng.random_range(1..=n);
                rand::seq::index::sample(&mut rng, n, k).into_vec()
            })
            .collect();
        (inst, FeasibleCollection::new(n, sets).unwrap())
    }

    #[test]
    fn noiseless_search_lands_within_epsilon() {
        for seed in 0..40 {
            let (inst, coll) = small_problem(seed);
            let optimum = coll.iter().map(|s| inst.revenue_of(s)).fold(0.0, f64::max);
            let config = BzConfig {
                epsilon: 0.05,
                steps: BzSteps::Fixed(60),
                seed,
                ..BzConfig::default()
            };
            let out = assort_mnl_bz(&inst, &coll, &config, &MipsBackend::Exact).unwrap();
            assert_eq!(out.report.iterations, 60);
            let scale = inst.max_price();
            assert!(
                (out.theta_hat - optimum).abs() <= 0.05 * scale,
                "seed {seed}"
            );
            assert!(out.report.revenue >= optimum - 0.05 * scale);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (inst, coll) = small_problem(3);
        let problem = Problem::new(&inst, &coll).unwrap();
        let config = BzConfig::default();
        let run = || {
            let mut c = NoisyComparator::new(
                problem.exact_comparator(),
                inst.no_purchase_utility(),
                0.05,
                11,
            );
            problem.bz(&config, &mut c).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.posterior, b.posterior);
    }

    proptest! {
        #[test]
        fn posterior_stays_normalized_on_grid(seed in any::<u64>(), p in 0.0f64..0.3, alpha in 0.05f64..0.45) {
            let (inst, coll) = small_problem(seed);
            let problem = Problem::new(&inst, &coll).unwrap();
            let config = BzConfig { epsilon: 0.1, alpha, steps: BzSteps::Fixed(30), seed };
            let mut c = NoisyComparator::new(problem.exact_comparator(), inst.no_purchase_utility(), p, seed);
            let mut posterior = BzPosterior::uniform(0.1).unwrap();
            let out = problem.bz(&config, &mut c).unwrap();
            for step in &out.steps {
                let split = (step.threshold / 0.1).round();
                prop_assert!((step.threshold - 0.1 * split).abs() < 1e-12);
                let before = posterior.weights().to_vec();
                posterior.update(split as usize, step.observation, alpha);
                prop_assert!((posterior.total() - 1.0).abs() <= MASS_TOLERANCE);
                prop_assert!(posterior.weights().iter().all(|&a| a >= 0.0));
                // each bin is scaled by one of the two factors of the branch
                let ratios: Vec<f64> = posterior.weights().iter().zip(&before).map(|(a, b)| a / b).collect();
                let s = split as usize;
                prop_assert!(ratios[..s].windows(2).all(|w| (w[0] - w[1]).abs() < 1e-9));
                prop_assert!(ratios[s..].windows(2).all(|w| (w[0] - w[1]).abs() < 1e-9));
            }
            prop_assert_eq!(&posterior, &out.posterior);
        }
    }
}
