//! Batch entry point: parses a flat key-value config, runs one experiment
//! subcommand, and persists summary JSON plus CSV plot data.

mod commands;
mod config;
mod error;
mod output;
mod setup;

use clap::{Args, Parser, Subcommand};
use commands::RunContext;
use config::Config;
use error::CliError;
use output::OutDir;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fdlab",
    version,
    about = "Numerical laboratory for polyconvex energy minimization over flip-free piecewise-affine deformations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the flat key-value config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override (overrides run.seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: ingest, initialize, minimize, admissibility report.
    Minimize(RunArgs),
    /// Admissibility report for an existing deformation file.
    Check(RunArgs),
    /// Polyconvexity, coercivity and barrier-condition verifier suite.
    EnergyScan(RunArgs),
    /// Energy semicontinuity and minor weak-continuity sequence experiments.
    Semicontinuity(RunArgs),
    /// Divergence-free adjugate-row refinement study.
    Piola(RunArgs),
    /// Change-of-variables identity checks.
    Cov(RunArgs),
}

fn run(args: &RunArgs, body: fn(&RunContext) -> Result<(), CliError>) -> Result<(), CliError> {
    let cfg = Config::load(&args.config)?;
    let threads = cfg.usize_or("run.threads", 1)?;
    let seed = match args.seed {
        Some(s) => {
            // consume the config key so it does not count as unrecognized
            let _ = cfg.get_u64("run.seed")?;
            s
        }
        None => cfg.get_u64("run.seed")?.unwrap_or(0),
    };
    let out_path = match &args.out {
        Some(p) => p.clone(),
        None => PathBuf::from(cfg.get_str("output.dir").unwrap_or("out")),
    };
    let out = OutDir::create(&out_path)?;
    let ctx = RunContext { cfg, out, seed };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::runtime(format!("cannot build thread pool: {e}")))?;
    pool.install(|| body(&ctx))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Minimize(a) => run(a, commands::run_minimize),
        Command::Check(a) => run(a, commands::run_check),
        Command::EnergyScan(a) => run(a, commands::run_energy_scan),
        Command::Semicontinuity(a) => run(a, commands::run_semicontinuity),
        Command::Piola(a) => run(a, commands::run_piola),
        Command::Cov(a) => run(a, commands::run_cov),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
