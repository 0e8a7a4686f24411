//! Assortment optimization under the multinomial logit (MNL) choice model
//! over arbitrary, data-driven collections of feasible assortments.
//!
//! The solvers turn revenue maximization into a sequence of threshold
//! comparisons, each answered by a maximum inner product search over encoded
//! assortments (exactly, or approximately with locality-sensitive hashing).
//! Capacity-constrained families get a specialised top-`C` comparison.

pub mod choice;
pub mod error;
pub mod experiment;
pub mod feasible;
pub mod generate;
pub mod mips;
pub mod seed;
pub mod solvers;

pub use choice::{
    choice_probability, expected_revenue, no_purchase_probability, Assortment, MnlInstance,
};
pub use error::{Error, Result};
pub use experiment::{
    run_experiment, ExperimentSpec, ExperimentSummary, Generator, ResultRow, SolverConfig,
    SolverKind,
};
pub use feasible::{mine_frequent_itemsets, support, FeasibleCollection, ItemMap, TransactionLog};
pub use mips::{exact_argmax, EncodedPointSet, LshIndex, LshParams, MipsQuery};
pub use solvers::{
    adxopt_solve, assort_mnl, assort_mnl_approx, assort_mnl_approx_simple, assort_mnl_bz,
    assort_mnl_capacitated, exhaustive_capacitated, exhaustive_solve, BzConfig, BzPosterior,
    BzReport, BzSteps, CapacityConstraint, MipsBackend, Problem, SolveReport,
};
