use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use brw_core::lab::config::ExperimentConfig;
use brw_core::lab::persist::{run_scenario, SCHEMA_VERSION};
use brw_core::lab::scenario::{cdf_table_grid, ScenarioId, Setup};
use brw_core::lab::suite::{Level, Suite, DEFAULT_SUITE_SEED};
use brw_core::oracle::{big_jump_table, rows_to_csv, walk_grid, GridOptions};
use brw_core::StepLaw;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "brw-lab", version, about = "Monte Carlo lab for branching random walks with stretched-exponential steps")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write manifest, CSVs and stats.
    Run(RunArgs),
    /// Run the acceptance criteria and write a verdict JSON.
    Suite(SuiteArgs),
    /// Big-jump table for the n-step walk from the grid oracle.
    Oracle(OracleArgs),
    /// Write the c.d.f. table and the CSV schema for report rendering.
    ReportData(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<ScenarioId>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long, default_value = "smoke")]
    level: Level,
    #[arg(long, default_value_t = DEFAULT_SUITE_SEED)]
    seed: u64,
    #[arg(long, default_value = "brw-suite")]
    out: PathBuf,
    /// Run only these criteria (repeatable).
    #[arg(long = "criterion")]
    criteria: Vec<u8>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 0.5)]
    r: f64,
    #[arg(long, default_value_t = 4)]
    n: u32,
    #[arg(long, default_value_t = 1.0 / 32.0)]
    h: f64,
    #[arg(long, default_value_t = 220.0)]
    half_width: f64,
    #[arg(long, value_delimiter = ',', default_value = "40,80,160")]
    x: Vec<f64>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] brw_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0} criteria failed")]
    Criteria(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use brw_core::Error as E;
        match self {
            CliError::Criteria(_) => 1,
            CliError::Usage(_) | CliError::Core(E::Config(_)) => 2,
            CliError::Core(E::PopulationCap { .. } | E::CellCap { .. }) => 3,
            _ => 1,
        }
    }
}

fn experiment(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&args.config, args.scenario) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(id)) => ExperimentConfig::new(id),
        (None, None) => return Err(CliError::Usage("either --config or --scenario is required".into())),
    };
    if let Some(id) = args.scenario {
        cfg.scenario = id;
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = experiment(args)?;
    let res = run_scenario(&cfg)?;
    let verb = if res.resumed { "already complete" } else { "written" };
    println!("{} {verb}: {}", cfg.scenario, res.dir.display());
    for name in res.manifest.files.keys() {
        println!("  {name}");
    }
    Ok(())
}

fn suite(args: &SuiteArgs) -> Result<(), CliError> {
    let s = Suite::new(args.level, args.seed);
    let report = if args.criteria.is_empty() {
        s.run_all()
    } else {
        let verdicts: Vec<_> = args.criteria.iter().map(|&id| s.run(id)).collect();
        let passed = verdicts.iter().all(|v| v.passed);
        brw_core::lab::suite::SuiteReport { level: args.level, master_seed: args.seed, verdicts, passed }
    };
    for v in &report.verdicts {
        println!("{}", v.line());
    }
    fs::create_dir_all(&args.out)?;
    let path = args.out.join("verdicts.json");
    fs::write(&path, serde_json::to_vec_pretty(&report)?)?;
    println!("verdicts: {}", path.display());
    match report.verdicts.iter().filter(|v| !v.passed).count() {
        0 => Ok(()),
        n => Err(CliError::Criteria(n)),
    }
}

fn oracle(args: &OracleArgs) -> Result<(), CliError> {
    let step = StepLaw::symmetric_weibull(args.r)?;
    let walk = walk_grid(&step, args.n, args.h, args.half_width, GridOptions::default())?;
    let csv = rows_to_csv(&big_jump_table(&step, &walk, &args.x));
    match &args.out {
        Some(p) => fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn report_data(args: &RunArgs) -> Result<(), CliError> {
    let cfg = experiment(args)?;
    let setup = Setup::new(&cfg)?;
    let ctx = setup.context(&setup.w_pool(&cfg)?)?;
    let dir: &Path = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("cdf_table.csv"), ctx.cdf_table_csv(&cdf_table_grid())?)?;
    let schema = json!({
        "schema_version": SCHEMA_VERSION,
        "replicates.csv": ["replicate_index", "n", "Z_n", "W_n", "M_n", "N_n", "M_A", "M_B", "M_C", "M_D",
            "count_A", "count_B", "count_C", "count_D", "top_1..top_K", "indep_max", "discarded_flag"],
        "checkpoints.csv": ["replicate_index", "k", "M_k", "N_k"],
        "oracle_*.csv": ["n", "x", "lower", "upper", "reference_value", "ratio", "resolved_flag"],
        "cdf_table.csv": ["x", "F_V", "F_G", "F_H23", "F_G23"],
        "empty_cell": "blank field means not defined (extinct replicate or empty class)",
    });
    fs::write(dir.join("schema.json"), serde_json::to_vec_pretty(&schema)?)?;
    println!("report data written: {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| {
        if let Some(t) = cli.threads {
            rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
        }
        match &cli.command {
            Command::Run(a) => run(a),
            Command::Suite(a) => suite(a),
            Command::Oracle(a) => oracle(a),
            Command::ReportData(a) => report_data(a),
        }
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("brw-lab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
