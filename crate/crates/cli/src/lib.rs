//! Batch front-end for `simplex-sde`: boundary audits, simulations, rate and
//! stationary comparisons, and parameter sweeps driven by a TOML file.

pub mod commands;
pub mod config;
pub mod output;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use thiserror::Error;

/// Environment variable naming the default output directory.
pub const OUTDIR_ENV: &str = "SIMPLEX_SDE_OUTDIR";

#[derive(Debug, Parser)]
#[command(name = "simplex-sde", version, about = "Simulate and audit diffusion processes on the unit simplex")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Audit the process drift and diffusion on every boundary face.
    Check(RunArgs),
    /// Simulate an ensemble and write moment trajectories.
    Simulate(RunArgs),
    /// Simulate, then cross-validate moment rates and stationary moments.
    Compare(RunArgs),
    /// Run `compare` over a parameter grid.
    Sweep(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config file and the SIMPLEX_SDE_OUTDIR variable.
    #[arg(long)]
    pub outdir: Option<PathBuf>,
    /// Seed; overrides the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run even if the boundary audit fails.
    #[arg(long)]
    pub skip_audit: bool,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or usage; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// A check or validation failed; exit code 1.
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("i/o error: {e}"))
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let args = match &cli.command {
        Command::Check(a) | Command::Simulate(a) | Command::Compare(a) | Command::Sweep(a) => a.clone(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 2;
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Check(a) => commands::check(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Sweep(a) => commands::sweep(&a),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
