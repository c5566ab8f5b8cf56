//! Command-line front end: `analyze`, `simulate`, `compare` and `verify`.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 analytic failure,
//! 3 simulation failure (including the event guard), 4 verification breach.

mod commands;
mod config;
pub mod svg;

pub use commands::{cmd_analyze, cmd_compare, cmd_simulate, cmd_verify, AnalyzeOutput, SweepPoint, VerifyReport, VerifyRow};
pub use config::{AnalysisConfig, OutputConfig, RunConfig, SimulationConfig, SweepConfig, Tolerances, VerifyConfig};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::analytic::AnalyticError;
use crate::oracle::OracleError;
use crate::sim::SimError;
use crate::stats::StatsError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("analysis failed: {0}")]
    Analytic(#[from] AnalyticError),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("comparison failed: {0}")]
    Stats(#[from] StatsError),
    #[error("oracle failed: {0}")]
    Oracle(#[from] OracleError),
    #[error("verification breach: {0}")]
    Breach(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Analytic(_) | CliError::Stats(_) => 2,
            CliError::Sim(_) => 3,
            CliError::Oracle(_) | CliError::Breach(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "matree", version, about = "Multi-type attachment tree analyzer and simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write SVG plots.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Malthusian parameter, kernel and limiting degree laws.
    Analyze(CommonArgs),
    /// Simulate replicas and write trees and histograms.
    Simulate(CommonArgs),
    /// Analyze, simulate and compare (optionally over a sweep).
    Compare(CommonArgs),
    /// Cross-check the degree-law recursion against the forward equations.
    Verify(CommonArgs),
}

pub fn load_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| CliError::Io {
        path: args.config.clone(),
        source,
    })?;
    let mut cfg = RunConfig::from_json(&text).map_err(CliError::Config)?;
    if let Some(out) = &args.out {
        cfg.outputs.directory = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.simulation.seed = seed;
    }
    if args.svg {
        cfg.outputs.emit_svg = true;
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Analyze(a) => cmd_analyze(&load_config(a)?).map(|_| ()),
        Command::Simulate(a) => cmd_simulate(&load_config(a)?).map(|_| ()),
        Command::Compare(a) => cmd_compare(&load_config(a)?).map(|_| ()),
        Command::Verify(a) => cmd_verify(&load_config(a)?).map(|_| ()),
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
