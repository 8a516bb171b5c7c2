//! Command-line front end: argument parsing, run configuration and reports.

mod commands;
mod config;
mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::ModelFile;
pub use config::{Command, RunConfig};
pub use report::Report;

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "splicereg", version, about = "Deep quantile and composite (splicing) regression for positive responses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Generate a synthetic dataset with its true composite triplets.
    Simulate(CommonArgs),
    /// Fit a multiple-quantile network and report out-of-sample losses and coverage.
    FitQuantiles(CommonArgs),
    /// Fit the composite triplet network and report calibration.
    FitComposite(CommonArgs),
    /// Choose the score functions from the variance structure of the data.
    SelectPhi(CommonArgs),
    /// Score a dataset with a saved model or with given triplet predictions.
    Evaluate(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat key-value configuration file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl Sub {
    fn parts(&self) -> (Command, &CommonArgs) {
        match self {
            Sub::Simulate(a) => (Command::Simulate, a),
            Sub::FitQuantiles(a) => (Command::FitQuantiles, a),
            Sub::FitComposite(a) => (Command::FitComposite, a),
            Sub::SelectPhi(a) => (Command::SelectPhi, a),
            Sub::Evaluate(a) => (Command::Evaluate, a),
        }
    }
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    let (command, args) = cli.command.parts();
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path, command)?,
        None if command == Command::Simulate => RunConfig::default(),
        None => return Err(Error::config(format!("{} requires --config", command.name()))),
    };
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    commands::run(command, &cfg, &args.out)
}
