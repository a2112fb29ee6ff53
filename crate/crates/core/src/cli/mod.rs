//! Command-line front end.

mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use sddgat::Result;

#[derive(Debug, Parser)]
#[command(
    name = "sddgat",
    version,
    about = "Directional dual-graph attention for geospatial fluorosis risk"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset with an anisotropic fluoride plume field.
    GenData(GenDataArgs),
    /// Build graphs, train a model, and score the test split.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset, optionally with perturbed inputs.
    Eval(EvalArgs),
    /// Run an ablation, robustness, or region-holdout sweep.
    Experiment(ExperimentArgs),
    /// Summarize the spatial and feature graphs of a dataset.
    GraphStats(GraphStatsArgs),
}

#[derive(Debug, Args)]
pub struct Output {
    /// Directory receiving every output file and the run manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Flat `key = value` file; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub output: Output,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Plume axis in degrees counterclockwise from east.
    #[arg(long)]
    pub bearing: Option<f64>,
    #[arg(long)]
    pub len_along: Option<f64>,
    #[arg(long)]
    pub len_across: Option<f64>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub regions: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Radius threshold in standardized units, or `auto`.
    #[arg(long)]
    pub epsilon: Option<String>,
    /// Distance kernel bandwidth.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Feature-similarity term in spatial edge weights.
    #[arg(long)]
    pub lambda_edge: Option<f64>,
    /// Feature kernel bandwidth.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Neighbours per node in the feature graph.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OptimArgs {
    /// regression, classification, or dual.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub adam_eps: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lambda_smooth: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// `random` or `region`.
    #[arg(long)]
    pub split: Option<String>,
    /// Region used as the test set with `--split region`.
    #[arg(long)]
    pub holdout_region: Option<u32>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
    #[arg(long)]
    pub test_frac: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub output: Output,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// full, no_direction, single_graph, no_smooth, or knn_only.
    #[arg(long)]
    pub variant: Option<String>,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub output: Output,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// train, val, test, or all.
    #[arg(long = "split")]
    pub rows: Option<String>,
    /// Gaussian noise sd added to standardized numeric features.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Fraction of numeric feature entries set to zero.
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Perturbation seed; defaults to the checkpoint's training seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub output: Output,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// ablation, noise, dropout, or region.
    #[arg(long)]
    pub kind: Option<String>,
    /// Replicates per row.
    #[arg(long)]
    pub n_seeds: Option<usize>,
    /// Model for robustness and region sweeps.
    #[arg(long)]
    pub variant: Option<String>,
    /// Add a σ = 0 row to the noise sweep.
    #[arg(long)]
    pub include_zero_noise: bool,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
}

#[derive(Debug, Args)]
pub struct GraphStatsArgs {
    #[command(flatten)]
    pub output: Output,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Also write every edge to `edges.csv`.
    #[arg(long)]
    pub edges: bool,
    #[command(flatten)]
    pub graph: GraphArgs,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::GraphStats(a) => commands::graph_stats(a),
    }
}
