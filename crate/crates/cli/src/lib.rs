//! Command-line front end: argument definitions and the command implementations.

pub mod benchmark;
mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use tckim_core::eval::EmbeddingFormat;
use tckim_core::synth::{Scheme, SignMode};

pub use benchmark::{run_benchmark, BenchmarkSpec, BenchmarkTable};
pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "tckim",
    version,
    about = "Time series cluster kernel for data with informative missingness"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG overrides
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bin a long-format event file into a dataset file
    Ingest(IngestArgs),
    /// Mask cells so that missing rates correlate with the labels
    Inject(InjectArgs),
    /// Train the kernel and write the model and in-sample Gram matrix
    Train(TrainArgs),
    /// Cross-validate the KPCA + kNN pipeline
    Evaluate(EvaluateArgs),
    /// Accuracy grid over injected toy datasets, correlations, schemes and modes
    Benchmark(BenchmarkArgs),
    /// Embed a dataset with a trained model and export the KPCA coordinates
    Embed(EmbedArgs),
}

#[derive(Debug, clap::Args)]
pub struct IngestArgs {
    /// CSV with header `sample_id,timestamp,variable,value`
    #[arg(long)]
    pub events: PathBuf,
    /// Number of time bins
    #[arg(long)]
    pub bins: usize,
    /// End of the observation window; bins have width horizon / bins
    #[arg(long)]
    pub horizon: f64,
    /// Output dataset file
    #[arg(long)]
    pub out: PathBuf,
    /// Variables to keep, in order [default: order of first appearance]
    #[arg(long, value_delimiter = ',')]
    pub variables: Option<Vec<String>>,
    /// CSV with header `sample_id,label`; every sample needs a label
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Drop variables whose missing rate exceeds this value
    #[arg(long)]
    pub drop_missing_above: Option<f64>,
}

#[derive(Debug, clap::Args)]
pub struct InjectArgs {
    /// Labeled, fully or partially observed dataset file
    #[arg(long)]
    pub dataset: PathBuf,
    /// label_rate or mnar_threshold
    #[arg(long, default_value = "label_rate")]
    pub scheme: Scheme,
    /// Target |correlation| between per-record missing rates and labels
    #[arg(long)]
    pub rho: f64,
    /// Seed of the sign, rate and cell draws
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-variable signs: balanced or independent
    #[arg(long, default_value = "balanced", value_parser = parse_sign_mode)]
    pub signs: SignMode,
    /// Output dataset file
    #[arg(long)]
    pub out: PathBuf,
    /// Injection report file (key=value lines)
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn parse_sign_mode(s: &str) -> Result<SignMode, String> {
    match s {
        "balanced" => Ok(SignMode::Balanced),
        "independent" => Ok(SignMode::Independent),
        _ => Err(format!(
            "unknown sign mode `{s}` (expected balanced or independent)"
        )),
    }
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Dataset file
    #[arg(long)]
    pub dataset: PathBuf,
    /// Flat TOML file with the same keys as the flags below
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output model file
    #[arg(long)]
    pub model_out: PathBuf,
    /// Output in-sample Gram matrix file
    #[arg(long)]
    pub gram_out: PathBuf,
    #[command(flatten)]
    pub settings: RunConfig,
}

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    /// Labeled dataset with exactly two classes
    #[arg(long)]
    pub dataset: PathBuf,
    /// Flat TOML file with the same keys as the flags below
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Summary table `metric,mean,se`
    #[arg(long)]
    pub report_out: PathBuf,
    /// Full report with per-fold metrics and record ids, as JSON
    #[arg(long)]
    pub audit_out: Option<PathBuf>,
    #[command(flatten)]
    pub settings: RunConfig,
}

#[derive(Debug, clap::Args)]
pub struct BenchmarkArgs {
    /// Directory for `accuracy.csv` and `runs.csv`
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Number of toy datasets; seed i uses base seed + i
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// Target correlations
    #[arg(long = "rho", value_delimiter = ',', default_values_t = [0.2, 0.4, 0.6, 0.8])]
    pub rhos: Vec<f64>,
    /// Injection schemes
    #[arg(long, value_delimiter = ',', default_values_t = [Scheme::LabelRate, Scheme::MnarThreshold])]
    pub schemes: Vec<Scheme>,
    /// Kernel variants (columns of the grid)
    #[arg(long, value_delimiter = ',', default_values_t = tckim_core::Mode::ALL)]
    pub modes: Vec<tckim_core::Mode>,
    /// Records per toy dataset, split evenly between two classes
    #[arg(long, default_value_t = 200)]
    pub n_records: usize,
    /// Variables per toy dataset
    #[arg(long, default_value_t = 3)]
    pub n_vars: usize,
    /// Time steps per toy dataset
    #[arg(long, default_value_t = 20)]
    pub len: usize,
    /// Amplitude of the class mean curves relative to unit noise
    #[arg(long, default_value_t = 0.65)]
    pub separation: f64,
    /// Flat TOML file with the same keys as the flags below
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: RunConfig,
}

#[derive(Debug, clap::Args)]
pub struct EmbedArgs {
    /// Model file written by `train`
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset to embed; must match the model's variables and length
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output file
    #[arg(long)]
    pub out: PathBuf,
    /// csv or svg
    #[arg(long, default_value = "csv")]
    pub format: EmbeddingFormat,
    /// KPCA dimensions
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    /// Worker threads, 0 for all cores
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Ingest(args) => commands::ingest(args),
        Command::Inject(args) => commands::inject(args),
        Command::Train(args) => commands::train(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Benchmark(args) => commands::benchmark(args),
        Command::Embed(args) => commands::embed(args),
    }
}
