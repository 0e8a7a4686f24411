//! Monte Carlo experiment sweeps.
//!
//! An [`ExperimentSpec`] names an instance generator, a grid of problem
//! sizes, a list of solvers and the number of runs. [`run_experiment`] solves
//! every (grid point, run) once per solver, scores each answer against the
//! exhaustive oracle when the oracle fits in the configured budget, and
//! writes one CSV row per (solver, run).
//!
//! Specs are TOML key-value files:
//!
//! ```toml
//! profile = "general"        # optional preset; other keys override it
//! generator = "neg-correlated"
//! items = 1000               # or a list, e.g. [100, 250, 500]
//! assortments = [100, 200, 400]
//! sizes = [8, 16]
//! solvers = ["exhaustive", "mnl", "approx-simple-lsh", "bz-lsh"]
//! runs = 50
//! seed = 7
//! epsilon = 0.1
//! alpha = 0.1
//! ```
//!
//! Seeds: grid point `g`, run `r` uses `derive(derive(seed, g), r)` for its
//! instance and collection; LSH projections use the `LSH` stream of that seed
//! and BZ thresholds its `BZ_THRESHOLD` stream.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::choice::MnlInstance;
use crate::error::{Error, Result};
use crate::feasible::{mine_frequent_itemsets, FeasibleCollection, TransactionLog};
use crate::generate;
use crate::mips::{empirical_failure_rate, LshIndex, LshParams, MipsQuery};
use crate::seed;
use crate::solvers::{
    adxopt_solve, approx_iteration_bound, assort_mnl, assort_mnl_approx, assort_mnl_approx_simple,
    assort_mnl_bz, assort_mnl_capacitated, exhaustive_capacitated, exhaustive_solve, BzConfig,
    BzSteps, CapacityConstraint, MipsBackend, Problem, SolveReport,
};

pub const DEFAULT_RUNS: usize = 50;
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_ORACLE_BUDGET: f64 = 1e8;
pub const DEFAULT_MIN_CARDINALITY: usize = 2;

const MAX_ENUMERATED_ITEMS: usize = 24;
const HELD_OUT_QUERY_COUNT: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    Uniform,
    NegCorrelated,
    /// Collection mined from a transaction log; negatively correlated
    /// utilities and prices are drawn for its items on every run.
    TransactionLog,
    /// Instance and collection read from files; only solver randomness
    /// changes across runs.
    Files,
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Generator::Uniform),
            "neg-correlated" => Ok(Generator::NegCorrelated),
            "transaction-log" => Ok(Generator::TransactionLog),
            "files" => Ok(Generator::Files),
            _ => Err(Error::InvalidParameter(format!(
                "unknown generator {s:?} (expected uniform, neg-correlated, transaction-log or files)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Exhaustive,
    Mnl,
    Approx,
    ApproxSimple,
    Bz,
    Capacitated,
    Adxopt,
}

impl SolverKind {
    fn base_name(self) -> &'static str {
        match self {
            SolverKind::Exhaustive => "exhaustive",
            SolverKind::Mnl => "mnl",
            SolverKind::Approx => "approx",
            SolverKind::ApproxSimple => "approx-simple",
            SolverKind::Bz => "bz",
            SolverKind::Capacitated => "capacitated",
            SolverKind::Adxopt => "adxopt",
        }
    }

    fn takes_backend(self) -> bool {
        matches!(
            self,
            SolverKind::Mnl | SolverKind::Approx | SolverKind::ApproxSimple | SolverKind::Bz
        )
    }

    fn needs_capacity(self) -> bool {
        matches!(self, SolverKind::Capacitated | SolverKind::Adxopt)
    }
}

/// A solver and, for the threshold searches, whether comparisons go
/// through LSH. Written as e.g. `bz` or `bz-lsh`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub lsh: bool,
}

impl SolverConfig {
    pub const fn exact(kind: SolverKind) -> Self {
        SolverConfig { kind, lsh: false }
    }

    pub const fn lsh(kind: SolverKind) -> Self {
        SolverConfig { kind, lsh: true }
    }
}

impl fmt::Display for SolverConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.base_name())?;
        if self.lsh {
            f.write_str("-lsh")?;
        }
        Ok(())
    }
}

impl FromStr for SolverConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, lsh) = match s.strip_suffix("-lsh") {
            Some(base) => (base, true),
            None => (s, false),
        };
        let kind = [
            SolverKind::Exhaustive,
            SolverKind::Mnl,
            SolverKind::Approx,
            SolverKind::ApproxSimple,
            SolverKind::Bz,
            SolverKind::Capacitated,
            SolverKind::Adxopt,
        ]
        .into_iter()
        .find(|k| k.base_name() == base)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown solver {s:?}")))?;
        if lsh && !kind.takes_backend() {
            return Err(Error::InvalidParameter(format!(
                "solver {base} has no LSH variant"
            )));
        }
        Ok(SolverConfig { kind, lsh })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub generator: Generator,
    /// Item counts to sweep; ignored by the file-backed generators.
    pub items: Vec<usize>,
    /// Collection sizes to sweep; ignored when `capacity` is set and by the
    /// file-backed generators.
    pub assortments: Vec<usize>,
    /// Solve `|S| <= capacity` over all subsets instead of a collection.
    pub capacity: Option<usize>,
    /// Inclusive range of random assortment sizes.
    pub sizes: (usize, usize),
    pub solvers: Vec<SolverConfig>,
    pub runs: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub alpha: f64,
    pub nu: f64,
    pub rho: f64,
    pub bz_steps: BzSteps,
    /// Largest `n * N` (or `n * 2^n` when enumerating subsets) for which the
    /// exhaustive oracle runs.
    pub oracle_budget: f64,
    /// When set, `v_0` is calibrated so that the no-purchase probability with
    /// every item shown equals this value.
    pub no_purchase_prob: Option<f64>,
    pub log: Option<PathBuf>,
    pub min_support: Option<f64>,
    pub min_cardinality: usize,
    pub instance: Option<PathBuf>,
    pub collection: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            generator: Generator::Uniform,
            items: vec![20],
            assortments: vec![100],
            capacity: None,
            sizes: (1, 10),
            solvers: vec![
                SolverConfig::exact(SolverKind::Exhaustive),
                SolverConfig::exact(SolverKind::Mnl),
            ],
            runs: DEFAULT_RUNS,
            seed: 0,
            epsilon: DEFAULT_EPSILON,
            alpha: DEFAULT_ALPHA,
            nu: 0.0,
            rho: LshParams::default().rho,
            bz_steps: BzConfig::default().steps,
            oracle_budget: DEFAULT_ORACLE_BUDGET,
            no_purchase_prob: None,
            log: None,
            min_support: None,
            min_cardinality: DEFAULT_MIN_CARDINALITY,
            instance: None,
            collection: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Grid {
    One(usize),
    Many(Vec<usize>),
}

impl From<Grid> for Vec<usize> {
    fn from(g: Grid) -> Self {
        match g {
            Grid::One(x) => vec![x],
            Grid::Many(v) => v,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct RawSpec {
    profile: Option<String>,
    generator: Option<Generator>,
    items: Option<Grid>,
    assortments: Option<Grid>,
    capacity: Option<usize>,
    sizes: Option<(usize, usize)>,
    solvers: Option<Vec<String>>,
    runs: Option<usize>,
    seed: Option<u64>,
    epsilon: Option<f64>,
    alpha: Option<f64>,
    nu: Option<f64>,
    rho: Option<f64>,
    steps: Option<usize>,
    gamma: Option<f64>,
    p_max: Option<f64>,
    oracle_budget: Option<f64>,
    no_purchase_prob: Option<f64>,
    log: Option<PathBuf>,
    min_support: Option<f64>,
    min_cardinality: Option<usize>,
    instance: Option<PathBuf>,
    collection: Option<PathBuf>,
}

/// Names accepted by [`ExperimentSpec::preset`].
pub const PRESETS: &[&str] = &[
    "tiny",
    "general",
    "sweep-assortments",
    "sweep-items",
    "capacitated",
];

fn all_collection_solvers() -> Vec<SolverConfig> {
    use SolverKind::*;
    vec![
        SolverConfig::exact(Exhaustive),
        SolverConfig::exact(Mnl),
        SolverConfig::exact(Approx),
        SolverConfig::exact(ApproxSimple),
        SolverConfig::exact(Bz),
        SolverConfig::lsh(Mnl),
        SolverConfig::lsh(ApproxSimple),
        SolverConfig::lsh(Bz),
    ]
}

fn scale_solvers() -> Vec<SolverConfig> {
    use SolverKind::*;
    vec![
        SolverConfig::exact(Exhaustive),
        SolverConfig::exact(Mnl),
        SolverConfig::lsh(ApproxSimple),
        SolverConfig::lsh(Bz),
    ]
}

impl ExperimentSpec {
    /// Predefined profiles; see [`PRESETS`].
    pub fn preset(name: &str) -> Result<Self> {
        let base = ExperimentSpec::default();
        let spec = match name {
            "tiny" => ExperimentSpec {
                items: vec![20],
                assortments: vec![100],
                sizes: (1, 6),
                runs: 5,
                solvers: all_collection_solvers(),
                ..base
            },
            "general" => ExperimentSpec {
                generator: Generator::NegCorrelated,
                items: vec![1000],
                assortments: vec![10_000],
                sizes: (8, 16),
                runs: 20,
                epsilon: 1e-4,
                solvers: scale_solvers(),
                ..base
            },
            "sweep-assortments" => ExperimentSpec {
                generator: Generator::NegCorrelated,
                items: vec![1000],
                assortments: (0..10).map(|k| 100 << k).collect(),
                sizes: (8, 16),
                epsilon: 1e-4,
                solvers: scale_solvers(),
                ..base
            },
            "sweep-items" => ExperimentSpec {
                generator: Generator::NegCorrelated,
                items: vec![100, 250, 500, 1000, 2500, 5000, 10_000, 15_000],
                capacity: Some(10),
                solvers: vec![
                    SolverConfig::exact(SolverKind::Capacitated),
                    SolverConfig::exact(SolverKind::Adxopt),
                ],
                ..base
            },
            "capacitated" => ExperimentSpec {
                items: vec![12],
                capacity: Some(5),
                epsilon: 1e-3,
                solvers: vec![
                    SolverConfig::exact(SolverKind::Exhaustive),
                    SolverConfig::exact(SolverKind::Capacitated),
                    SolverConfig::exact(SolverKind::Adxopt),
                ],
                ..base
            },
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown profile {name:?} (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(spec)
    }

    /// Parses a TOML spec. Relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("experiment spec: {e}")))?;
        let mut spec = match &raw.profile {
            Some(name) => ExperimentSpec::preset(name)?,
            None => ExperimentSpec::default(),
        };
        let resolve = |p: PathBuf| if p.is_relative() { base_dir.join(p) } else { p };
        if let Some(g) = raw.generator {
            spec.generator = g;
        }
        if let Some(g) = raw.items {
            spec.items = g.into();
        }
        if let Some(g) = raw.assortments {
            spec.assortments = g.into();
        }
        if raw.capacity.is_some() {
            spec.capacity = raw.capacity;
        }
        if let Some(s) = raw.sizes {
            spec.sizes = s;
        }
        if let Some(names) = raw.solvers {
            spec.solvers = names.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(x) = raw.$field { spec.$field = x; })* };
        }
        set!(
            runs,
            seed,
            epsilon,
            alpha,
            nu,
            rho,
            oracle_budget,
            min_cardinality
        );
        match (raw.steps, raw.gamma, raw.p_max) {
            (Some(t), None, None) => spec.bz_steps = BzSteps::Fixed(t),
            (None, None, None) => {}
            (None, gamma, p_max) => {
                let (g0, p0) = match spec.bz_steps {
                    BzSteps::Confidence { gamma, p_max } => (gamma, p_max),
                    BzSteps::Fixed(_) => (0.1, 0.09),
                };
                spec.bz_steps = BzSteps::Confidence {
                    gamma: gamma.unwrap_or(g0),
                    p_max: p_max.unwrap_or(p0),
                };
            }
            _ => {
                return Err(Error::InvalidParameter(
                    "give either steps or gamma/p-max, not both".into(),
                ))
            }
        }
        if raw.no_purchase_prob.is_some() {
            spec.no_purchase_prob = raw.no_purchase_prob;
        }
        if raw.min_support.is_some() {
            spec.min_support = raw.min_support;
        }
        spec.log = raw.log.map(resolve).or(spec.log);
        spec.instance = raw.instance.map(resolve).or(spec.instance);
        spec.collection = raw.collection.map(resolve).or(spec.collection);
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.solvers.is_empty() {
            return bad("at least one solver is required".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.oracle_budget >= 0.0) {
            return bad(format!(
                "oracle budget must be nonnegative, got {}",
                self.oracle_budget
            ));
        }
        if let Some(q) = self.no_purchase_prob {
            if !(0.0..1.0).contains(&q) {
                return bad(format!(
                    "no-purchase probability must lie in [0, 1), got {q}"
                ));
            }
        }
        let lsh = LshParams {
            rho: self.rho,
            ..LshParams::default()
        };
        if self.solvers.iter().any(|s| s.lsh) {
            lsh.validate()?;
        }
        if self.solvers.iter().any(|s| s.kind == SolverKind::Approx) {
            approx_iteration_bound(self.epsilon, self.nu)?;
        }
        if self.solvers.iter().any(|s| s.kind == SolverKind::Bz) {
            BzConfig {
                epsilon: self.epsilon,
                alpha: self.alpha,
                steps: self.bz_steps,
                seed: 0,
            }
            .validate()?;
        }
        match self.capacity {
            Some(c) => {
                if c == 0 {
                    return bad("capacity must be at least 1".into());
                }
                if !matches!(
                    self.generator,
                    Generator::Uniform | Generator::NegCorrelated
                ) {
                    return bad("capacity experiments need a synthetic generator".into());
                }
                if let Some(s) = self
                    .solvers
                    .iter()
                    .find(|s| !s.kind.needs_capacity() && s.kind != SolverKind::Exhaustive)
                {
                    return bad(format!(
                        "solver {s} needs a feasible collection, not a capacity"
                    ));
                }
            }
            None => {
                if let Some(s) = self.solvers.iter().find(|s| s.kind.needs_capacity()) {
                    return bad(format!("solver {s} needs a capacity"));
                }
            }
        }
        match self.generator {
            Generator::Uniform | Generator::NegCorrelated => {
                if self.items.is_empty() || self.items.contains(&0) {
                    return bad("item counts must be nonempty and positive".into());
                }
                if self.capacity.is_none() {
                    if self.assortments.is_empty() || self.assortments.contains(&0) {
                        return bad("assortment counts must be nonempty and positive".into());
                    }
                    if self.sizes.0 == 0 || self.sizes.0 > self.sizes.1 {
                        return bad(format!("invalid assortment size range {:?}", self.sizes));
                    }
                }
            }
            Generator::TransactionLog => {
                if self.log.is_none() {
                    return bad("the transaction-log generator needs a log path".into());
                }
                match self.min_support {
                    Some(t) if t > 0.0 && t <= 1.0 => {}
                    Some(t) => return bad(format!("minimum support must lie in (0, 1], got {t}")),
                    None => {
                        return bad("the transaction-log generator needs a minimum support".into())
                    }
                }
            }
            Generator::Files => {
                if self.instance.is_none() || self.collection.is_none() {
                    return bad("the files generator needs instance and collection paths".into());
                }
            }
        }
        Ok(())
    }
}

/// One solver's answer on one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub solver: String,
    pub n_items: usize,
    /// Collection size, or 0 when solving over all subsets.
    pub n_assortments: usize,
    pub capacity: Option<usize>,
    pub run: usize,
    pub wall_time_nanos: u64,
    pub index_build_nanos: u64,
    pub revenue: f64,
    pub oracle_revenue: Option<f64>,
    /// `(oracle - revenue) / oracle`; 0 when the oracle revenue is 0.
    pub relative_error: Option<f64>,
    pub iterations: usize,
    pub comparator_probes: usize,
    pub candidates_scored: usize,
    /// `L1`, `L2` and `L3` of the LSH index, for LSH-backed solvers.
    pub lsh_hash_bits: Option<usize>,
    pub lsh_tables: Option<usize>,
    pub lsh_probe_budget: Option<usize>,
    /// Share of held-out threshold queries on which the index missed the
    /// exact maximizer.
    pub empirical_pe: Option<f64>,
}

/// LSH shape and empirical failure rate of a run's index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LshDiagnostics {
    hash_bits: usize,
    tables: usize,
    probe_budget: usize,
    pe: f64,
}

fn lsh_params(spec: &ExperimentSpec, run_seed: u64) -> LshParams {
    LshParams {
        rho: spec.rho,
        seed: seed::derive(run_seed, seed::LSH),
        probe_budget: None,
    }
}

fn lsh_diagnostics(
    spec: &ExperimentSpec,
    instance: &MnlInstance,
    collection: &FeasibleCollection,
    run_seed: u64,
) -> Result<LshDiagnostics> {
    let problem = Problem::new(instance, collection)?;
    let index = LshIndex::build(problem.points(), &lsh_params(spec, run_seed))?;
    let mut rng = seed::rng(seed::derive(run_seed, seed::HELD_OUT_QUERIES));
    let queries: Vec<MipsQuery> = (0..HELD_OUT_QUERY_COUNT)
        .map(|_| MipsQuery::for_threshold(problem.normalized(), rng.random_range(0.0..1.0)))
        .collect();
    Ok(LshDiagnostics {
        hash_bits: index.hash_bits(),
        tables: index.table_count(),
        probe_budget: index.probe_budget(),
        pe: empirical_failure_rate(&index, problem.points(), &queries),
    })
}

/// Per-solver aggregate over the runs of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSummary {
    pub solver: String,
    pub n_items: usize,
    pub n_assortments: usize,
    pub runs: usize,
    pub mean_time_ms: f64,
    pub stddev_time_ms: f64,
    pub mean_relative_error: Option<f64>,
    pub max_relative_error: Option<f64>,
    pub mean_candidates_scored: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentSummary {
    pub rows: usize,
    pub solvers: Vec<SolverSummary>,
    /// Grid points on which the oracle was skipped for exceeding its budget.
    pub oracle_skipped: usize,
}

impl fmt::Display for ExperimentSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<20} {:>7} {:>8} {:>5} {:>12} {:>12} {:>10} {:>10} {:>12}",
            "solver", "n", "N", "runs", "mean ms", "sd ms", "mean err", "max err", "scored"
        )?;
        let err = |e: Option<f64>| e.map_or_else(|| "-".to_string(), |e| format!("{e:.4}"));
        for s in &self.solvers {
            writeln!(
                f,
                "{:<20} {:>7} {:>8} {:>5} {:>12.3} {:>12.3} {:>10} {:>10} {:>12.1}",
                s.solver,
                s.n_items,
                s.n_assortments,
                s.runs,
                s.mean_time_ms,
                s.stddev_time_ms,
                err(s.mean_relative_error),
                err(s.max_relative_error),
                s.mean_candidates_scored
            )?;
        }
        if self.oracle_skipped > 0 {
            writeln!(f, "oracle skipped on {} grid point(s)", self.oracle_skipped)?;
        }
        Ok(())
    }
}

enum Feasible {
    Collection(FeasibleCollection),
    Capacity(CapacityConstraint),
}

struct GridPoint {
    n_items: usize,
    n_assortments: usize,
}

fn grid(spec: &ExperimentSpec) -> Vec<GridPoint> {
    let assortments = if spec.capacity.is_some() {
        vec![0]
    } else {
        spec.assortments.clone()
    };
    match spec.generator {
        Generator::Uniform | Generator::NegCorrelated => spec
            .items
            .iter()
            .flat_map(|&n| {
                assortments.iter().map(move |&m| GridPoint {
                    n_items: n,
                    n_assortments: m,
                })
            })
            .collect(),
        // sizes come from the data
        Generator::TransactionLog | Generator::Files => vec![GridPoint {
            n_items: 0,
            n_assortments: 0,
        }],
    }
}

/// Data shared by every run of the file-backed generators.
enum Fixed {
    None,
    Mined(FeasibleCollection),
    Files(MnlInstance, FeasibleCollection),
}

fn load_fixed(spec: &ExperimentSpec) -> Result<Fixed> {
    match spec.generator {
        Generator::TransactionLog => {
            let log = TransactionLog::load(spec.log.as_ref().expect("validated"))?;
            let min_support = spec.min_support.expect("validated");
            let mined = mine_frequent_itemsets(&log, min_support, spec.min_cardinality)?;
            if mined.is_empty() {
                return Err(Error::EmptyCollection);
            }
            Ok(Fixed::Mined(mined))
        }
        Generator::Files => {
            let inst = MnlInstance::load(spec.instance.as_ref().expect("validated"))?;
            let coll = FeasibleCollection::load(spec.collection.as_ref().expect("validated"))?;
            if coll.item_count() != inst.item_count() {
                return Err(Error::InvalidParameter(format!(
                    "collection has {} items but the instance has {}",
                    coll.item_count(),
                    inst.item_count()
                )));
            }
            Ok(Fixed::Files(inst, coll))
        }
        _ => Ok(Fixed::None),
    }
}

fn draw_instance(generator: Generator, n: usize, seed: u64) -> Result<MnlInstance> {
    match generator {
        Generator::Uniform => generate::uniform(n, seed),
        _ => generate::neg_correlated(n, seed),
    }
}

fn build_run(
    spec: &ExperimentSpec,
    fixed: &Fixed,
    point: &GridPoint,
    run_seed: u64,
) -> Result<(MnlInstance, Feasible)> {
    let (instance, feasible) = match fixed {
        Fixed::Files(inst, coll) => (inst.clone(), Feasible::Collection(coll.clone())),
        Fixed::Mined(coll) => (
            generate::neg_correlated(coll.item_count(), run_seed)?,
            Feasible::Collection(coll.clone()),
        ),
        Fixed::None => {
            let inst = draw_instance(spec.generator, point.n_items, run_seed)?;
            let feasible = match spec.capacity {
                Some(c) => Feasible::Capacity(CapacityConstraint::upper_bound(c)),
                None => Feasible::Collection(generate::random_collection(
                    point.n_items,
                    point.n_assortments,
                    spec.sizes.0..=spec.sizes.1,
                    run_seed,
                )?),
            };
            (inst, feasible)
        }
    };
    let instance = match spec.no_purchase_prob {
        Some(q) => instance.with_no_purchase_probability(q)?,
        None => instance,
    };
    Ok((instance, feasible))
}

fn oracle_cost(instance: &MnlInstance, feasible: &Feasible) -> f64 {
    let n = instance.item_count() as f64;
    match feasible {
        Feasible::Collection(c) => n * c.len() as f64,
        Feasible::Capacity(_) if instance.item_count() > MAX_ENUMERATED_ITEMS => f64::INFINITY,
        Feasible::Capacity(_) => n * 2f64.powi(instance.item_count() as i32),
    }
}

fn oracle(instance: &MnlInstance, feasible: &Feasible) -> Result<SolveReport> {
    match feasible {
        Feasible::Collection(c) => exhaustive_solve(instance, c),
        Feasible::Capacity(k) => exhaustive_capacitated(instance, k),
    }
}

fn solve(
    spec: &ExperimentSpec,
    solver: SolverConfig,
    instance: &MnlInstance,
    feasible: &Feasible,
    run_seed: u64,
) -> Result<SolveReport> {
    let backend = if solver.lsh {
        MipsBackend::Lsh(lsh_params(spec, run_seed))
    } else {
        MipsBackend::Exact
    };
    match (solver.kind, feasible) {
        (SolverKind::Exhaustive, _) => oracle(instance, feasible),
        (SolverKind::Mnl, Feasible::Collection(c)) => {
            assort_mnl(instance, c, spec.epsilon, &backend)
        }
        (SolverKind::Approx, Feasible::Collection(c)) => {
            assort_mnl_approx(instance, c, spec.epsilon, spec.nu, &backend)
        }
        (SolverKind::ApproxSimple, Feasible::Collection(c)) => {
            assort_mnl_approx_simple(instance, c, spec.epsilon, &backend)
        }
        (SolverKind::Bz, Feasible::Collection(c)) => {
            let config = BzConfig {
                epsilon: spec.epsilon,
                alpha: spec.alpha,
                steps: spec.bz_steps,
                seed: run_seed,
            };
            assort_mnl_bz(instance, c, &config, &backend).map(|r| r.report)
        }
        (SolverKind::Capacitated, Feasible::Capacity(k)) => {
            assort_mnl_capacitated(instance, k, spec.epsilon)
        }
        (SolverKind::Adxopt, Feasible::Capacity(_)) => {
            adxopt_solve(instance, spec.capacity.expect("validated"), None)
        }
        (kind, _) => Err(Error::InvalidParameter(format!(
            "solver {} does not apply to this experiment",
            kind.base_name()
        ))),
    }
}

/// Seed of run `run` at grid point `point`.
pub fn run_seed(master: u64, point: usize, run: usize) -> u64 {
    seed::derive(seed::derive(master, point as u64), run as u64)
}

/// Runs every (grid point, run, solver) combination in `spec`, returning rows
/// ordered by grid point, run, then solver order.
pub fn collect_rows(spec: &ExperimentSpec) -> Result<(Vec<ResultRow>, usize)> {
    spec.validate()?;
    let fixed = load_fixed(spec)?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for (g, point) in grid(spec).iter().enumerate() {
        let mut warned = false;
        for run in 0..spec.runs {
            let seed = run_seed(spec.seed, g, run);
            let (instance, feasible) = build_run(spec, &fixed, point, seed)?;
            let n_assortments = match &feasible {
                Feasible::Collection(c) => c.len(),
                Feasible::Capacity(_) => 0,
            };
            let cost = oracle_cost(&instance, &feasible);
            let needs_exhaustive = spec
                .solvers
                .iter()
                .any(|s| s.kind == SolverKind::Exhaustive);
            let oracle_report = if cost <= spec.oracle_budget || needs_exhaustive {
                Some(oracle(&instance, &feasible)?)
            } else {
                None
            };
            // the exhaustive row always runs when asked for; scoring against it
            // still honours the budget
            let oracle_revenue = oracle_report
                .as_ref()
                .filter(|_| cost <= spec.oracle_budget)
                .map(|r| r.revenue);
            if oracle_revenue.is_none() && !warned {
                warn!(
                    "oracle skipped: estimated cost {cost:.3e} exceeds budget {:.3e} (n = {}, N = {n_assortments})",
                    spec.oracle_budget,
                    instance.item_count()
                );
                warned = true;
                skipped += 1;
            }
            let diagnostics = match &feasible {
                Feasible::Collection(c) if spec.solvers.iter().any(|s| s.lsh) => {
                    Some(lsh_diagnostics(spec, &instance, c, seed)?)
                }
                _ => None,
            };
            for &solver in &spec.solvers {
                let lsh = diagnostics.filter(|_| solver.lsh);
                let report = match (&oracle_report, solver.kind) {
                    (Some(r), SolverKind::Exhaustive) => r.clone(),
                    _ => solve(spec, solver, &instance, &feasible, seed)?,
                };
                let relative_error = oracle_revenue.map(|o| {
                    if o > 0.0 {
                        (o - report.revenue) / o
                    } else {
                        0.0
                    }
                });
                rows.push(ResultRow {
                    solver: solver.to_string(),
                    n_items: instance.item_count(),
                    n_assortments,
                    capacity: spec.capacity,
                    run,
                    wall_time_nanos: report.wall_time_nanos,
                    index_build_nanos: report.index_build_nanos,
                    revenue: report.revenue,
                    oracle_revenue,
                    relative_error,
                    iterations: report.iterations,
                    comparator_probes: report.comparator_probes,
                    candidates_scored: report.candidates_scored,
                    lsh_hash_bits: lsh.map(|d| d.hash_bits),
                    lsh_tables: lsh.map(|d| d.tables),
                    lsh_probe_budget: lsh.map(|d| d.probe_budget),
                    empirical_pe: lsh.map(|d| d.pe),
                });
            }
        }
    }
    Ok((rows, skipped))
}

pub fn summarize(rows: &[ResultRow], oracle_skipped: usize) -> ExperimentSummary {
    let mut groups: Vec<(String, usize, usize, Vec<&ResultRow>)> = Vec::new();
    for row in rows {
        match groups
            .iter_mut()
            .find(|g| g.0 == row.solver && g.1 == row.n_items && g.2 == row.n_assortments)
        {
            Some(g) => g.3.push(row),
            None => groups.push((
                row.solver.clone(),
                row.n_items,
                row.n_assortments,
                vec![row],
            )),
        }
    }
    let solvers = groups
        .into_iter()
        .map(|(solver, n_items, n_assortments, rows)| {
            let k = rows.len() as f64;
            let times: Vec<f64> = rows
                .iter()
                .map(|r| r.wall_time_nanos as f64 * 1e-6)
                .collect();
            let mean = times.iter().sum::<f64>() / k;
            let var = if rows.len() > 1 {
                times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            let errors: Vec<f64> = rows.iter().filter_map(|r| r.relative_error).collect();
            let (mean_err, max_err) = if errors.is_empty() {
                (None, None)
            } else {
                (
                    Some(errors.iter().sum::<f64>() / errors.len() as f64),
                    Some(errors.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                )
            };
            SolverSummary {
                solver,
                n_items,
                n_assortments,
                runs: rows.len(),
                mean_time_ms: mean,
                stddev_time_ms: var.sqrt(),
                mean_relative_error: mean_err,
                max_relative_error: max_err,
                mean_candidates_scored: rows
                    .iter()
                    .map(|r| r.candidates_scored as f64)
                    .sum::<f64>()
                    / k,
            }
        })
        .collect();
    ExperimentSummary {
        rows: rows.len(),
        solvers,
        oracle_skipped,
    }
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Runs `spec`, writes its rows as CSV to `out` and returns the summary.
pub fn run_experiment<W: Write>(spec: &ExperimentSpec, out: W) -> Result<ExperimentSummary> {
    let (rows, skipped) = collect_rows(spec)?;
    write_rows(&rows, out)?;
    Ok(summarize(&rows, skipped))
}
