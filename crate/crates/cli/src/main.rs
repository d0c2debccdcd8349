mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::commands::BenchArgs;
use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<tokmerge::Error> for CliError {
    fn from(e: tokmerge::Error) -> Self {
        match e {
            tokmerge::Error::Trace(_) => CliError::Internal(e.to_string()),
            e => CliError::User(e.to_string()),
        }
    }
}

/// Video transformer inference with spatio-temporal token merging.
#[derive(Parser, Debug)]
#[command(name = "tokmerge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Time the forward pass and write results files and a sweep CSV.
    Bench {
        /// Run config file.
        config: PathBuf,
        /// Timed iterations per plan (median reported, at least 3).
        #[arg(long, default_value_t = 5)]
        iters: usize,
        /// Untimed iterations before timing.
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        /// Comma-separated r values to benchmark instead of the config's r.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<usize>>,
        /// Benchmark sweep points concurrently (TOKMERGE_THREADS workers).
        /// Timings then share the machine and are not isolated.
        #[arg(long)]
        no_isolation: bool,
    },
    /// Run one forward pass; write logits and per-layer token counts.
    Forward {
        /// Run config file.
        config: PathBuf,
    },
    /// Render the final token clusters over the input frames.
    Viz {
        /// Run config file.
        config: PathBuf,
    },
    /// Render clusters from merging with a single layer's keys.
    Probe {
        /// Run config file.
        config: PathBuf,
        /// Layer whose projection produces the merge keys.
        #[arg(long)]
        layer: usize,
    },
    /// Print the per-layer r schedule and the token trajectory.
    Schedule {
        /// Run config file.
        config: PathBuf,
    },
    /// Write seeded synthetic weights to the config's weights path.
    Genweights {
        /// Run config file.
        config: PathBuf,
        /// Weight initialization seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn threads() -> Result<usize, CliError> {
    match std::env::var("TOKMERGE_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| CliError::User(format!("TOKMERGE_THREADS must be a positive integer, got {v:?}"))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Bench {
            config,
            iters,
            warmup,
            sweep,
            no_isolation,
        } => {
            let cfg = RunConfig::load(&config)?;
            let threads = threads()?;
            let args = BenchArgs {
                iters,
                warmup,
                sweep,
                parallel: no_isolation.then_some(threads),
            };
            commands::bench(&cfg, &args)
        }
        Command::Forward { config } => commands::forward_cmd(&RunConfig::load(&config)?),
        Command::Viz { config } => commands::viz(&RunConfig::load(&config)?),
        Command::Probe { config, layer } => commands::probe(&RunConfig::load(&config)?, layer),
        Command::Schedule { config } => commands::schedule(&RunConfig::load(&config)?),
        Command::Genweights { config, seed } => commands::genweights(&RunConfig::load(&config)?, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            match e {
                CliError::User(_) => ExitCode::from(1),
                CliError::Internal(_) => ExitCode::from(2),
            }
        }
    }
}
