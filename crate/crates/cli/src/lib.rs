//! Command-line tooling around `uipc-core`: file formats, checkpoints, run
//! manifests and the `uipc` subcommands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use uipc_core::ModelKind;

#[derive(Debug, Parser)]
#[command(name = "uipc", version, about = "Explainable prototype-connection recommenders")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving all outputs.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Suppress progress output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest, filter and split an interaction log.
    Prepare(PrepareArgs),
    /// Train a model on prepared splits.
    Train(TrainArgs),
    /// Rank held-out items with a checkpoint.
    Evaluate(EvaluateArgs),
    /// Explain recommendations of a UIPC-MF checkpoint.
    Explain(ExplainArgs),
    /// Random hyperparameter search.
    Search(SearchArgs),
    /// Generate a planted block-structure dataset.
    Synth(SynthArgs),
}

/// Model names accepted by `--model`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Mf,
    Acf,
    #[value(name = "protomf")]
    #[serde(rename = "protomf")]
    ProtoMf,
    UipcMf,
    UipcMfL1,
}

impl ModelName {
    pub fn kind(self) -> ModelKind {
        match self {
            ModelName::Mf => ModelKind::Mf,
            ModelName::Acf => ModelKind::Acf,
            ModelName::ProtoMf => ModelKind::ProtoMf,
            ModelName::UipcMf | ModelName::UipcMfL1 => ModelKind::UipcMf,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelName::UipcMfL1 => "uipc-mf-l1",
            other => other.kind().name(),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PrepareArgs {
    /// Interaction log: user, item, optional rating, timestamp.
    #[arg(long)]
    pub input: PathBuf,
    /// Field separator: auto, tab, comma, whitespace or a literal string.
    #[arg(long, default_value = "auto")]
    pub delimiter: String,
    #[arg(long, default_value_t = 5)]
    pub user_core: usize,
    #[arg(long, default_value_t = 5)]
    pub item_core: usize,
    /// Keep only rows rated strictly above this value.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Prepared data directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelName,
    /// Hyperparameter TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write per-step losses to steps.csv.
    #[arg(long)]
    pub log_steps: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    /// Checkpoint directory.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// validation or test.
    #[arg(long, default_value = "test")]
    pub stage: String,
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10])]
    pub k: Vec<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExplainArgs {
    /// Checkpoint directory.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// User key to explain (with --item).
    #[arg(long, requires = "item")]
    pub user: Option<String>,
    /// Item key to explain (with --user).
    #[arg(long, requires = "user")]
    pub item: Option<String>,
    /// Item prototype to profile.
    #[arg(long)]
    pub prototype: Option<usize>,
    /// Export per-prototype preference quantiles.
    #[arg(long)]
    pub pref_dist: bool,
    /// Prototypes per explanation, or items per prototype profile.
    #[arg(long, default_value_t = 5)]
    pub top: usize,
    /// Supporting train items per prototype.
    #[arg(long, default_value_t = 3)]
    pub support: usize,
    /// Item display names: key followed by free columns.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    /// Rationale template with {items}, {prototype}, {user} and {item}.
    #[arg(long, default_value = commands::DEFAULT_TEMPLATE)]
    pub template: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SearchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelName,
    /// Search space TOML.
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Worker threads.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub parallel: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    pub groups: usize,
    #[arg(long, default_value_t = 100)]
    pub users_per_group: usize,
    #[arg(long, default_value_t = 40)]
    pub items_per_group: usize,
    #[arg(long, default_value_t = 0.3)]
    pub p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    pub p_out: f64,
    #[arg(long, default_value_t = 5)]
    pub user_core: usize,
    #[arg(long, default_value_t = 5)]
    pub item_core: usize,
}

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let ctx = commands::Context {
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Prepare(a) => commands::prepare(&ctx, a).map(drop),
        Command::Train(a) => commands::train(&ctx, a).map(drop),
        Command::Evaluate(a) => commands::evaluate(&ctx, a).map(drop),
        Command::Explain(a) => commands::explain(&ctx, a).map(drop),
        Command::Search(a) => commands::search(&ctx, a).map(drop),
        Command::Synth(a) => commands::synth(&ctx, a).map(drop),
    }
}
