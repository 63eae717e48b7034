//! Command-line front end: configuration, replica orchestration and output.
// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod output;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", .0.iter().map(|m| format!("  - {m}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),

    #[error(transparent)]
    Model(#[from] signed_hawkes::Error),
}

impl CliError {
    /// 1 for invalid input, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        use signed_hawkes::Error as E;
        match self {
            CliError::Model(E::OutsideDomain { .. } | E::Quadrature { .. } | E::InsufficientCycles { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "signed-hawkes", version, about = "Simulation and excursion-based inference for signed Hawkes processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Master seed (overrides the configuration).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of replicas (overrides the configuration).
    #[arg(long)]
    pub replicas: Option<u64>,
    /// Index of the first replica, for splitting a run across invocations.
    #[arg(long)]
    pub first_replica: Option<u64>,
    /// Output directory (overrides the environment and the configuration).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate event paths by thinning.
    Simulate(Common),
    /// Sample clusters and compare their length tail with the bound.
    ClusterStats(Common),
    /// Busy-period transforms, abscissa and tail rate of the M/G/inf queue.
    QueueTail(Common),
    /// Renewal times and cycle statistics of the window process.
    RenewalStats(Common),
    /// Excursion estimators of the stationary mean and variance.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Events CSV (as written by `simulate`) to analyse instead of simulating.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Confidence interval and concentration bounds.
    Ci(Common),
}

pub fn run(cli: Cli) -> Result<PathBuf, CliError> {
    match cli.command {
        Command::Simulate(c) => commands::simulate(&c),
        Command::ClusterStats(c) => commands::cluster_stats(&c),
        Command::QueueTail(c) => commands::queue_tail(&c),
        Command::RenewalStats(c) => commands::renewal_stats(&c),
        Command::Estimate { common, events } => commands::estimate(&common, events.as_deref()),
        Command::Ci(c) => commands::ci(&c),
    }
}
