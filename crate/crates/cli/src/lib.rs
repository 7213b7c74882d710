//! Command-line front end: scenario generation, tracking, evaluation and
//! Monte Carlo experiments.

pub mod commands;
pub mod config;
pub mod formats;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::Variant;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("filter error: {0}")]
    Filter(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Filter(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rfs-track", version, about = "Multi-target tracking with online clutter and detection-rate estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created when missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Scenario seed (base seed for experiments).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo replicates.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long, value_enum)]
    pub variant: Option<Variant>,
    /// OSPA cut-off.
    #[arg(long)]
    pub c: Option<f64>,
    /// OSPA order.
    #[arg(long)]
    pub p: Option<f64>,
    /// OSPA-T label penalty; defaults to the cut-off.
    #[arg(long)]
    pub ell: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate ground truth and detections for a scenario.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run a tracker on a detections file.
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        detections: PathBuf,
    },
    /// Score tracks against ground truth with OSPA and OSPA-T.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
    },
    /// Seeded replicates of every configured variant, evaluated and summarized.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common } => {
            let config = commands::load_config(&common)?;
            commands::simulate(&config, &common.out)
        }
        Command::Track { common, detections } => {
            let config = commands::load_config(&common)?;
            commands::track(&config, &detections, &common.out)
        }
        Command::Evaluate { common, truth, tracks } => {
            let config = commands::load_config(&common)?;
            commands::evaluate(&config.metrics, &truth, &tracks, &common.out)
        }
        Command::Experiment { common } => {
            let config = commands::load_config(&common)?;
            commands::experiment(&config, &common.out)
        }
    }
}
