//! `wpcdelay`: solve, sweep and tabulate delay-optimal allocations for
//! wireless-powered links.

mod commands;
mod config;
mod table;

use std::io;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{Config, Overrides};

#[derive(Parser, Debug)]
#[command(name = "wpcdelay", version, about = "Delay-optimal wireless power transfer allocations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Allocation for fixed channel gains, one row per node
    Solve {
        #[command(flatten)]
        opts: Overrides,
    },
    /// Average delay over a grid of R0, SNR or m
    Sweep {
        #[command(flatten)]
        opts: Overrides,
    },
    /// Write the data series of one figure (2 to 6) as CSV files
    Figure {
        #[arg(value_parser = clap::value_parser!(u8).range(2..=6))]
        number: u8,
        #[command(flatten)]
        opts: Overrides,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Solver {
        context: String,
        #[source]
        source: wpc_delay::Error,
    },
    #[error("cannot write output: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use wpc_delay::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Solver { source, .. } => match source {
                E::InvalidParams(_) => 2,
                E::ConvergenceGuard { .. } => 4,
                _ => 3,
            },
            CliError::Io(_) => 1,
        }
    }
}

/// Tags a library error with the problem and equation that raised it.
pub fn ctx<T>(r: wpc_delay::Result<T>, context: &str) -> Result<T, CliError> {
    r.map_err(|source| CliError::Solver {
        context: context.to_string(),
        source,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (opts, figure) = match cli.command {
        Command::Solve { opts } => (opts, None),
        Command::Sweep { opts } => (opts, Some(0)),
        Command::Figure { number, opts } => (opts, Some(number)),
    };
    let cfg = Config::resolve(opts)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
    match figure {
        None => commands::solve(&cfg),
        Some(0) => commands::sweep(&cfg),
        Some(n) => commands::figure(&cfg, n),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wpcdelay: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
