mod commands;
mod config;

use clap::{Parser, Subcommand};
use config::{CommonArgs, RunConfig, SEED_ENV};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config or incompatible inputs; exit code 2.
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Run(#[from] anyhow::Error),
}

#[derive(Debug, Parser)]
#[command(name = "sacts", version, about = "Semi-asymmetric convolution forecaster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model on the training split of a dataset.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Forecast past the end of every series with a trained checkpoint.
    Forecast {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Naive and model accuracy on the held-out horizon of each dataset.
    Benchmark {
        #[command(flatten)]
        common: CommonArgs,
        /// Skip training; report the naive baseline only.
        #[arg(long)]
        naive_only: bool,
    },
    /// One training run per (window size, lifting factor) grid point.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',')]
        windows: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        out_factors: Vec<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let env_seed = std::env::var(SEED_ENV).ok();
    match cli.command {
        Command::Train { common } => commands::train(&RunConfig::resolve(&common, env_seed)?),
        Command::Forecast { common, checkpoint } => {
            commands::forecast(&RunConfig::resolve(&common, env_seed)?, &checkpoint)
        }
        Command::Benchmark { common, naive_only } => {
            commands::benchmark(&RunConfig::resolve(&common, env_seed)?, naive_only)
        }
        Command::Sweep { common, windows, out_factors, workers } => {
            let mut cfg = RunConfig::resolve(&common, env_seed)?;
            if !windows.is_empty() {
                cfg.set("sweep_windows", &commands::join(&windows))?;
            }
            if !out_factors.is_empty() {
                cfg.set("sweep_out_factors", &commands::join(&out_factors))?;
            }
            if let Some(w) = workers {
                cfg.set("workers", &w.to_string())?;
            }
            commands::sweep(&cfg)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
