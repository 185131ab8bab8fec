//! `decouple`: sequence generation, coherence prediction, Monte-Carlo
//! fringe simulation and spectrum fitting from the command line.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{fit, predict, sequence, simulate};
use config::FileConfig;
use error::{CliError, CliResult};
use output::{OutputDir, RunInfo};

#[derive(Debug, Parser)]
#[command(
    name = "decouple",
    version,
    about = "Dynamic-decoupling sequences, dephasing and noise spectroscopy"
)]
struct Cli {
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random stream of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a pulse sequence as JSON.
    Sequence(sequence::SequenceArgs),
    /// Filter-function coherence prediction for one sequence and spectrum.
    Predict(predict::PredictArgs),
    /// Monte-Carlo Ramsey fringes and coherence curves.
    Simulate(simulate::SimulateArgs),
    /// Fit a noise spectrum, coherence times and a tau_c-versus-n line.
    Fit(fit::FitArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    let run = RunInfo {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        workers: cli.workers.or(cfg.workers),
    };
    if let Some(k) = run.workers {
        if k == 0 {
            return Err(CliError::usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot start worker pool: {e}")))?;
    }
    let root = cli
        .out
        .or(cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut out = OutputDir::create(&root)?;

    let (name, resolved) = match cli.command {
        Command::Sequence(a) => ("sequence", sequence::run(a, &cfg, &mut out, &run)?),
        Command::Predict(a) => ("predict", predict::run(a, &cfg, &mut out, &run)?),
        Command::Simulate(a) => ("simulate", simulate::run(a, &cfg, &mut out, &run)?),
        Command::Fit(a) => ("fit", fit::run(a, &cfg, &mut out, &run)?),
    };
    log::info!("wrote outputs to {}", out.root().display());
    out.finish(name, &run, &resolved)
}
