//! Command-line front door: model loading, pipeline orchestration and report
//! emission. Exit codes: 0 when a verdict or passing report was emitted, 2
//! when a model hypothesis fails, 1 on usage or numeric errors.

mod commands;
mod output;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use mrw_core::Error;

#[derive(Parser, Debug)]
#[command(name = "mrw", version, about = "Planar Markov random walk laboratory")]
struct Cli {
    /// Worker threads; defaults to MRW_WORKERS or all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full hypothesis pipeline: ergodicity, centering, covariance, scan.
    Analyze(AnalyzeArgs),
    /// Local-limit ratio series (and optional bivariate check) against the
    /// exact distribution.
    Llt(LltArgs),
    /// Kochen-Stone certificates and the recurrence verdict over targets.
    Recur(RecurArgs),
    /// Spectral-radius scan over the fundamental domain of the dual group.
    Arith(ArithArgs),
    /// Monte Carlo batches with checkpoint covariance diagnostics.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Built-in fixture: lazy2d, srw2d, diag2d, TS1, seesaw2 (finite);
    /// AF1, IFS1 (simulation only).
    #[arg(long)]
    fixture: Option<String>,
    /// Path to a model JSON file.
    #[arg(long, conflicts_with = "fixture")]
    model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Scan grid points per axis.
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// Modulus-one tolerance of the scan.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Output directory for the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LltArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Horizon of the series.
    #[arg(long, default_value_t = 1000)]
    nmax: usize,
    /// Target point "x,y" on the lattice.
    #[arg(long, default_value = "0,0")]
    s: String,
    /// Ball radius; defaults to half the lattice constant.
    #[arg(long)]
    eps: Option<f64>,
    /// State weight: "ones" or "state:K".
    #[arg(long, default_value = "ones")]
    f: String,
    /// Also run the bivariate check at times "n,m".
    #[arg(long)]
    bivar: Option<String>,
    /// Initial state of the driving chain.
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Export the exact distribution at the horizon as JSON.
    #[arg(long)]
    snapshot: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RecurArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Certificate horizon.
    #[arg(long = "N", default_value_t = 2000)]
    n: usize,
    /// Targets "x,y"; repeatable.
    #[arg(long = "s", num_args = 1.., default_values = ["0,0"])]
    targets: Vec<String>,
    /// Ball radii; repeatable.
    #[arg(long = "eps", num_args = 1.., default_values_t = [0.5])]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 64)]
    grid: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ArithArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 64)]
    grid: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Window half-width for scans without a compact fundamental domain.
    #[arg(long)]
    window: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 10_000)]
    traj: usize,
    #[arg(long, default_value_t = 40_000)]
    nmax: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Normalizer of the empirical CLT: standard or nlogn.
    #[arg(long, default_value = "standard")]
    normalizer: String,
    /// Checkpoint times "n1,n2,..."; defaults to nmax/4 and nmax.
    #[arg(long)]
    checkpoints: Option<String>,
    /// Hit target "x,y"; repeatable.
    #[arg(long = "s", num_args = 0..)]
    targets: Vec<String>,
    /// Hit radius shared by all targets.
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        // Hypothesis failures: the model is outside the theory's assumptions.
        Error::Arithmetic(..)
        | Error::NonErgodic(_)
        | Error::NotCentered(..)
        | Error::AmbiguousStationary(_)
        | Error::DegenerateCovariance(_)
        | Error::NonConstantModulus(_)
        | Error::NotArithmeticAt(..) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let workers = cli.workers.or_else(|| {
        std::env::var("MRW_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = workers {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let result = match cli.command {
        Command::Analyze(args) => commands::analyze(args),
        Command::Llt(args) => commands::llt(args),
        Command::Recur(args) => commands::recur(args),
        Command::Arith(args) => commands::arith(args),
        Command::Simulate(args) => commands::simulate(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
