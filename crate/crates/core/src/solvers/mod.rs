//! Revenue maximization by search over thresholds.
//!
//! Every solver works on the normalized instance (maximum price 1), so all
//! thresholds, tolerances and bins live in `[0, 1]`. Reported revenues are
//! recomputed on the caller's instance.

mod baseline;
mod bz;
mod capacitated;
mod comparator;
mod search;

pub use baseline::{adxopt_solve, exhaustive_capacitated, exhaustive_solve};
pub use bz::{
    assort_mnl_bz, confidence_steps, failure_bound, BzConfig, BzPosterior, BzReport, BzStep,
    BzSteps,
};
pub use capacitated::CapacityConstraint;
pub use comparator::{
    CapacityComparator, Comparator, ExactComparator, LshComparator, LshFamilyComparator,
    NoisyComparator, Probe, Witness,
};
pub use search::{
    approx_iteration_bound, assort_mnl, assort_mnl_approx, assort_mnl_approx_simple,
    assort_mnl_capacitated, iteration_bound, Problem, SearchStep, StepOutcome,
};

use crate::choice::Assortment;
use crate::mips::LshParams;

/// How comparison steps over an explicit collection are answered.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MipsBackend {
    #[default]
    Exact,
    Lsh(LshParams),
}

/// Result of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub assortment: Assortment,
    /// Position of `assortment` in the feasible collection, when it came
    /// from one.
    pub assortment_index: Option<usize>,
    /// Expected revenue of `assortment` in the input's price units.
    pub revenue: f64,
    pub iterations: usize,
    pub comparator_probes: usize,
    pub candidates_scored: usize,
    pub wall_time_nanos: u64,
    /// Portion of `wall_time_nanos` spent encoding and indexing.
    pub index_build_nanos: u64,
    pub steps: Vec<SearchStep>,
}
