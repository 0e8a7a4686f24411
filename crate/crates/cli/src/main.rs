use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use assort_core::experiment::{self, ExperimentSpec, ResultRow, PRESETS};
use assort_core::generate;
use assort_core::solvers::{
    adxopt_solve, assort_mnl, assort_mnl_approx, assort_mnl_approx_simple, assort_mnl_bz,
    assort_mnl_capacitated, exhaustive_capacitated, exhaustive_solve, BzConfig, BzSteps,
    SolveReport,
};
use assort_core::{
    mine_frequent_itemsets, CapacityConstraint, FeasibleCollection, Generator, LshParams,
    MipsBackend, MnlInstance, SolverConfig, SolverKind, TransactionLog,
};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] assort_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 3,
            CliError::Core(e) if e.is_io() => 3,
            _ => 2,
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Assortment optimization under the MNL choice model.
#[derive(Debug, Parser)]
#[command(name = "assort", version)]
struct Cli {
    /// Log more (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mine frequent itemsets from a transaction log into a collection file.
    Mine(MineArgs),
    /// Solve a single instance.
    Solve(SolveArgs),
    /// Run a Monte Carlo experiment sweep and write one CSV row per run.
    Bench(BenchArgs),
    /// Write a synthetic instance and collection.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct MineArgs {
    /// Transaction CSV: one transaction per line, comma-separated item ids.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    min_support: f64,
    #[arg(long, default_value_t = experiment::DEFAULT_MIN_CARDINALITY)]
    min_cardinality: usize,
    /// Collection file to write.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the dense-to-raw item id map [default: <out>.items].
    #[arg(long)]
    items_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long, default_value_t = experiment::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = experiment::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    nu: f64,
    #[arg(long, default_value_t = LshParams::default().rho)]
    rho: f64,
    /// Fixed BZ step count instead of the confidence rule.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Calibrate v0 so that nothing is bought with this probability when
    /// every item is shown.
    #[arg(long)]
    no_purchase_prob: Option<f64>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Collection file; omit when solving under --capacity.
    #[arg(long)]
    collection: Option<PathBuf>,
    /// Solve over all subsets of at most this many items.
    #[arg(long)]
    capacity: Option<usize>,
    /// exhaustive, mnl, approx, approx-simple, bz (each with an optional
    /// -lsh suffix), capacitated or adxopt.
    #[arg(long, default_value = "mnl")]
    solver: SolverConfig,
    #[command(flatten)]
    search: SearchArgs,
    /// Append the report as a CSV row to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Experiment spec (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a preset profile.
    #[arg(long)]
    profile: Option<String>,
    /// CSV output [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Comma-separated solver list.
    #[arg(long, value_delimiter = ',')]
    solver: Vec<SolverConfig>,
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long)]
    min_support: Option<f64>,
    #[arg(long)]
    min_cardinality: Option<usize>,
    #[arg(long)]
    oracle_budget: Option<f64>,
    #[arg(long)]
    no_purchase_prob: Option<f64>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// uniform or neg-correlated.
    #[arg(long, default_value = "uniform")]
    generator: Generator,
    #[arg(long)]
    items: usize,
    #[arg(long)]
    assortments: usize,
    #[arg(long, default_value_t = 1)]
    min_size: usize,
    #[arg(long, default_value_t = 10)]
    max_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_purchase_prob: Option<f64>,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    collection: PathBuf,
}

fn mine(args: &MineArgs) -> Result<()> {
    let log = TransactionLog::load(&args.log)?;
    let collection = mine_frequent_itemsets(&log, args.min_support, args.min_cardinality)?;
    collection.save(&args.out)?;
    let items_out = args.items_out.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".items");
        p.into()
    });
    log.items().save(&items_out)?;
    println!(
        "mined {} itemsets over {} items from {} transactions",
        collection.len(),
        log.item_count(),
        log.record_count()
    );
    Ok(())
}

fn load_instance(path: &Path, no_purchase_prob: Option<f64>) -> Result<MnlInstance> {
    let inst = MnlInstance::load(path)?;
    Ok(match no_purchase_prob {
        Some(q) => inst.with_no_purchase_probability(q)?,
        None => inst,
    })
}

fn solve_one(args: &SolveArgs, inst: &MnlInstance) -> Result<SolveReport> {
    let s = &args.search;
    let backend = if args.solver.lsh {
        MipsBackend::Lsh(LshParams {
            rho: s.rho,
            seed: assort_core::seed::derive(s.seed, assort_core::seed::LSH),
            probe_budget: None,
        })
    } else {
        MipsBackend::Exact
    };
    let report = match (args.solver.kind, &args.collection, args.capacity) {
        (_, Some(_), Some(_)) => {
            return Err(CliError::Validation(
                "give either --collection or --capacity, not both".into(),
            ))
        }
        (SolverKind::Capacitated, None, Some(c)) => {
            assort_mnl_capacitated(inst, &CapacityConstraint::upper_bound(c), s.epsilon)?
        }
        (SolverKind::Adxopt, None, Some(c)) => adxopt_solve(inst, c, None)?,
        (SolverKind::Exhaustive, None, Some(c)) => {
            exhaustive_capacitated(inst, &CapacityConstraint::upper_bound(c))?
        }
        (kind, Some(path), None) => {
            let coll = FeasibleCollection::load(path)?;
            match kind {
                SolverKind::Exhaustive => exhaustive_solve(inst, &coll)?,
                SolverKind::Mnl => assort_mnl(inst, &coll, s.epsilon, &backend)?,
                SolverKind::Approx => assort_mnl_approx(inst, &coll, s.epsilon, s.nu, &backend)?,
                SolverKind::ApproxSimple => {
                    assort_mnl_approx_simple(inst, &coll, s.epsilon, &backend)?
                }
                SolverKind::Bz => {
                    let mut config = BzConfig {
                        epsilon: s.epsilon,
                        alpha: s.alpha,
                        seed: s.seed,
                        ..BzConfig::default()
                    };
                    if let Some(t) = s.steps {
                        config.steps = BzSteps::Fixed(t);
                    }
                    let out = assort_mnl_bz(inst, &coll, &config, &backend)?;
                    println!("theta_hat: {}", out.theta_hat);
                    out.report
                }
                SolverKind::Capacitated | SolverKind::Adxopt => {
                    return Err(CliError::Validation(format!(
                        "solver {} needs --capacity",
                        args.solver
                    )))
                }
            }
        }
        (kind, None, Some(_)) => {
            return Err(CliError::Validation(format!(
                "solver {} needs --collection",
                SolverConfig::exact(kind)
            )))
        }
        (_, None, None) => {
            return Err(CliError::Validation(
                "one of --collection or --capacity is required".into(),
            ))
        }
    };
    Ok(report)
}

fn solve(args: &SolveArgs) -> Result<()> {
    let inst = load_instance(&args.instance, args.search.no_purchase_prob)?;
    let report = solve_one(args, &inst)?;
    let members: Vec<String> = report.assortment.iter().map(|i| i.to_string()).collect();
    println!("assortment: {}", members.join(","));
    if let Some(k) = report.assortment_index {
        println!("collection index: {k}");
    }
    println!("revenue: {}", report.revenue);
    println!(
        "iterations: {}  probes: {}  scored: {}  time: {:.3} ms",
        report.iterations,
        report.comparator_probes,
        report.candidates_scored,
        report.wall_time_nanos as f64 * 1e-6
    );
    if let Some(path) = &args.csv {
        let row = ResultRow {
            solver: args.solver.to_string(),
            n_items: inst.item_count(),
            n_assortments: 0,
            capacity: args.capacity,
            run: 0,
            wall_time_nanos: report.wall_time_nanos,
            index_build_nanos: report.index_build_nanos,
            revenue: report.revenue,
            oracle_revenue: None,
            relative_error: None,
            iterations: report.iterations,
            comparator_probes: report.comparator_probes,
            candidates_scored: report.candidates_scored,
            lsh_hash_bits: None,
            lsh_tables: None,
            lsh_probe_budget: None,
            empirical_pe: None,
        };
        let file = File::create(path).map_err(io_err(path))?;
        experiment::write_rows(&[row], BufWriter::new(file))?;
    }
    Ok(())
}

fn bench_spec(args: &BenchArgs) -> Result<ExperimentSpec> {
    let mut spec = match (&args.config, &args.profile) {
        (Some(_), Some(_)) => {
            return Err(CliError::Validation(
                "give either --config or --profile; set `profile` inside the config instead".into(),
            ))
        }
        (Some(path), None) => ExperimentSpec::load(path)?,
        (None, Some(name)) => ExperimentSpec::preset(name)?,
        (None, None) => {
            return Err(CliError::Validation(format!(
                "one of --config or --profile is required (profiles: {})",
                PRESETS.join(", ")
            )))
        }
    };
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(x) = args.$field { spec.$field = x; })* };
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
    if args.capacity.is_some() {
        spec.capacity = args.capacity;
    }
    if args.min_support.is_some() {
        spec.min_support = args.min_support;
    }
    if args.no_purchase_prob.is_some() {
        spec.no_purchase_prob = args.no_purchase_prob;
    }
    if !args.solver.is_empty() {
        spec.solvers = args.solver.clone();
    }
    spec.validate()?;
    Ok(spec)
}

fn bench(args: &BenchArgs) -> Result<()> {
    let spec = bench_spec(args)?;
    let summary = match &args.out {
        Some(path) => {
            let file = File::create(path).map_err(io_err(path))?;
            let summary = experiment::run_experiment(&spec, BufWriter::new(file))?;
            print!("{summary}");
            summary
        }
        None => {
            let summary = experiment::run_experiment(&spec, io::stdout().lock())?;
            eprint!("{summary}");
            summary
        }
    };
    log::info!("wrote {} rows", summary.rows);
    Ok(())
}

fn gen(args: &GenArgs) -> Result<()> {
    let inst = match args.generator {
        Generator::Uniform => generate::uniform(args.items, args.seed)?,
        Generator::NegCorrelated => generate::neg_correlated(args.items, args.seed)?,
        other => {
            return Err(CliError::Validation(format!(
                "gen supports the uniform and neg-correlated generators, not {other:?}"
            )))
        }
    };
    let inst = match args.no_purchase_prob {
        Some(q) => inst.with_no_purchase_probability(q)?,
        None => inst,
    };
    let coll = generate::random_collection(
        args.items,
        args.assortments,
        args.min_size..=args.max_size,
        args.seed,
    )?;
    inst.save(&args.instance)?;
    coll.save(&args.collection)?;
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "wrote {} items to {} and {} assortments to {}",
        inst.item_count(),
        args.instance.display(),
        coll.len(),
        args.collection.display()
    )
    .map_err(io_err(Path::new("<stdout>")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    let result = match &cli.command {
        Command::Mine(a) => mine(a),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Gen(a) => gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
