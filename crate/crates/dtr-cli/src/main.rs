//! `dtr` — simulate longitudinal panels, estimate threshold-regime values,
//! sweep threshold grids, tune adherence windows, and run replication
//! studies from a manifest.
//!
//! Every subcommand prints a JSON report on stdout; bulk output (panels,
//! surfaces, study tables) goes to CSV files. Errors are reported as a JSON
//! envelope on stderr with a stable `error` code, and the exit status
//! distinguishes configuration problems (2), data/IO problems (3), and
//! statistical failures such as empty adherence sets (4).

mod config;
mod ops;
mod parse;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dtr_engine::EngineError;

use crate::config::Config;
use crate::ops::Ctx;

#[derive(Parser)]
#[command(name = "dtr", version, about = "Threshold treatment-regime estimation toolkit")]
struct Cli {
    /// RNG seed; omitted seeds are generated and echoed on stderr
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Rayon worker threads (default: DTR_ENGINE_THREADS or all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Key-value config file; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for output files not given an explicit path
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic longitudinal panel and write it as CSV
    Simulate(SimulateArgs),
    /// Estimate the value of one regime on one panel
    Estimate(EstimateArgs),
    /// Evaluate every regime on a threshold grid and report the optimum
    Surface(SurfaceArgs),
    /// Pick adherence-window half-widths by bootstrap variance/bias loss
    SelectWindow(SelectWindowArgs),
    /// Run a replication study (from flags or from a saved manifest)
    Study(StudyArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario name: sim1 (two-stage) or sim2 (single-stage)
    #[arg(long)]
    scenario: Option<String>,
    /// Panel size
    #[arg(long)]
    n: Option<usize>,
    /// Override the scenario's noise scales (comma-separated)
    #[arg(long)]
    scales: Option<String>,
    /// Interpret --scales as variances instead of standard deviations
    #[arg(long)]
    scales_are_variances: bool,
    /// Output CSV path (default: <out-dir>/panel.csv)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EstimateArgs {
    /// Panel CSV
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Regime text, stages separated by '|': "x1<=350 | x2<=450"
    #[arg(long)]
    regime: Option<String>,
    /// Estimator label: IPW, nIPW, GAW, nGAW, BAW, nBAW, or A-prefixed
    #[arg(long)]
    estimator: Option<String>,
    /// Relaxation budget constant (eps_n = c * n^-k)
    #[arg(long)]
    c: Option<f64>,
    /// Relaxation budget decay exponent
    #[arg(long)]
    k: Option<f64>,
    /// Window half-widths for BAW estimators (comma-separated, one per threshold)
    #[arg(long)]
    delta: Option<String>,
}

#[derive(Args)]
pub struct SurfaceArgs {
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Base regime supplying the clause structure the grid re-thresholds
    #[arg(long)]
    regime: Option<String>,
    /// Grid axes: "psi1=150:500:5,psi2=200:600:5"
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated estimator labels (default nIPW,nGAW)
    #[arg(long)]
    estimators: Option<String>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    delta: Option<String>,
    /// Output CSV path (default: <out-dir>/surface.csv)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SelectWindowArgs {
    #[arg(long)]
    panel: Option<PathBuf>,
    #[arg(long)]
    regime: Option<String>,
    /// Candidate half-width axes, one "lo:hi:step" per threshold
    #[arg(long)]
    window_grid: Option<String>,
    /// Bootstrap resamples shared across candidates
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Weight on squared bootstrap bias in the selection loss
    #[arg(long)]
    lambda_bias: Option<f64>,
    /// Statistic bootstrapped per candidate: plain or augmented
    #[arg(long)]
    statistic: Option<String>,
    /// Refit propensities (and pseudo-outcomes) inside each resample
    #[arg(long)]
    refit_nuisance: bool,
    /// Disqualify candidates with more than this fraction of failed resamples
    #[arg(long)]
    max_excluded: Option<f64>,
    /// Candidate table CSV path (default: <out-dir>/window_candidates.csv)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct StudyArgs {
    /// Re-run a saved study manifest byte-for-byte (ignores other flags)
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Sample sizes, comma-separated
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    estimators: Option<String>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    /// Retune c per sample size so the worst-case bias is range/m
    #[arg(long)]
    bias_target: Option<f64>,
    #[arg(long)]
    delta: Option<String>,
    /// Monte Carlo draws per cell for the truth surface (0 to skip)
    #[arg(long)]
    truth_mc: Option<usize>,
    /// External-panel size for on-policy adherence diagnostics (0 to skip)
    #[arg(long)]
    external_n: Option<usize>,
}

fn resolve_threads(flag: Option<usize>, config: &Config) -> anyhow::Result<()> {
    let threads = match flag {
        Some(t) => Some(t),
        None => match config.get_parsed::<usize>("run.threads")? {
            Some(t) => Some(t),
            None => std::env::var("DTR_ENGINE_THREADS")
                .ok()
                .and_then(|v| v.parse().ok()),
        },
    };
    if let Some(threads) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| EngineError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    resolve_threads(cli.threads, &config)?;
    let ctx = Ctx { config, seed: cli.seed, out_dir: cli.out_dir.clone() };

    match &cli.command {
        Command::Simulate(args) => ops::simulate(&ctx, args),
        Command::Estimate(args) => ops::run_estimate(&ctx, args),
        Command::Surface(args) => ops::run_surface(&ctx, args),
        Command::SelectWindow(args) => ops::run_select_window(&ctx, args),
        Command::Study(args) => ops::run_study_cmd(&ctx, args),
    }
}

/// Map an error chain onto the stderr JSON envelope and exit status. Engine
/// errors carry their own code and status; anything else is a generic CLI
/// failure.
fn report(err: &anyhow::Error) -> ExitCode {
    let (code, status) = err
        .chain()
        .find_map(|cause| cause.downcast_ref::<EngineError>())
        .map(|e| (e.reason_code(), e.exit_code()))
        .unwrap_or(("cli", 2));
    let envelope = serde_json::json!({ "error": code, "message": format!("{err:#}") });
    eprintln!("{envelope}");
    ExitCode::from(status as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => report(&err),
    }
}
