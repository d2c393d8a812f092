//! `sctc`: dataset construction, event extraction, training and
//! evaluation jobs driven by one TOML config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Overrides;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Event(#[from] sctc_core::event::EventError),
    #[error(transparent)]
    Model(#[from] sctc_core::model::ModelError),
    #[error(transparent)]
    Eval(#[from] sctc_core::eval::EvalError),
    #[error(transparent)]
    Build(#[from] sctc_core::builder::BuildError),
    #[error(transparent)]
    Extract(#[from] sctc_extract::ExtractError),
}

#[derive(Parser)]
#[command(name = "sctc", version, about = "Temporal complex-event datasets and LoGo forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Model variant: full, local, global, share or late.
    #[arg(long)]
    variant: Option<String>,
    /// Language-model transport: mock, replay or http.
    #[arg(long)]
    transport: Option<String>,
    /// Dataset directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster documents, split superclusters, filter and write a dataset.
    BuildDataset {
        #[command(flatten)]
        common: Common,
    },
    /// Run hierarchical event extraction over an article file.
    Extract {
        #[command(flatten)]
        common: Common,
    },
    /// Merge entity name variants in an extracted event file.
    LinkEntities {
        #[command(flatten)]
        common: Common,
    },
    /// Train one model and keep the best validation checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score a trained checkpoint on one split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory written by `train`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// train, val or test.
        #[arg(long)]
        split: Option<String>,
    },
    /// Train and test all five variants and print the comparison table.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Train every combination in the `[grid]` table and pick the best by
    /// validation MRR.
    GridSearch {
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic dataset or document corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        /// modular, contradiction or documents.
        #[arg(long)]
        kind: Option<String>,
    },
}

fn overrides(c: &Common) -> Overrides {
    Overrides {
        seed: c.seed,
        variant: c.variant.clone(),
        transport: c.transport.clone(),
        dataset: c.dataset.clone(),
        ..Overrides::default()
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    use commands as c;
    match cli.command {
        Command::BuildDataset { common } => c::build_dataset(&common.resolve(overrides(&common))?, &common.out),
        Command::Extract { common } => c::extract(&common.resolve(overrides(&common))?, &common.out),
        Command::LinkEntities { common } => c::link_entities(&common.resolve(overrides(&common))?, &common.out),
        Command::Train { common } => c::train(&common.resolve(overrides(&common))?, &common.out),
        Command::Evaluate {
            common,
            checkpoint,
            split,
        } => {
            let flags = Overrides {
                checkpoint,
                split,
                ..overrides(&common)
            };
            c::evaluate(&common.resolve(flags)?, &common.out)
        }
        Command::Ablate { common } => c::ablate(&common.resolve(overrides(&common))?, &common.out),
        Command::GridSearch { common } => c::grid_search(&common.resolve(overrides(&common))?, &common.out),
        Command::Synth { common, kind } => {
            let flags = Overrides {
                kind,
                ..overrides(&common)
            };
            c::synth(&common.resolve(flags)?, &common.out)
        }
    }
}

impl Common {
    fn resolve(&self, flags: Overrides) -> Result<config::RunConfig, CliError> {
        config::RunConfig::resolve(self.config.as_deref(), &flags)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Config { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
