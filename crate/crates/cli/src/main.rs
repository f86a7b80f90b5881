mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scrnn::{Error, ErrorCategory};

#[derive(Debug, Parser)]
#[command(
    name = "scrnn",
    version,
    about = "Train and evaluate skeleton-joint co-attention motion predictors"
)]
struct Cli {
    /// Worker threads for per-window gradients (overrides the config).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Reduce gradients in window order. Results are then independent of the
    /// thread count; this is always the case and the flag is recorded in the
    /// manifest.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON training configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TableFormat {
    Markdown,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Sinusoid,
    WalkLike,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on every CSV file in a directory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Replay the config recorded in an earlier run manifest.
        #[arg(long, conflicts_with_all = ["config", "overrides"])]
        manifest: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict the frames following the last observed frames of a CSV file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean angle error of predicted frames against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Comma-separated horizons in milliseconds.
        #[arg(long, value_delimiter = ',')]
        horizons_ms: Option<Vec<f64>>,
        #[arg(long, default_value_t = scrnn::datamodel::DEFAULT_FRAME_INTERVAL_MS)]
        frame_interval_ms: f64,
        /// Row label; defaults to the truth file stem.
        #[arg(long)]
        tag: Option<String>,
        #[arg(long, value_enum, default_value_t = TableFormat::Markdown)]
        format: TableFormat,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with finite differences on a random instance.
    Gradcheck {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 3)]
        joints: usize,
        #[arg(long, default_value_t = 0)]
        instance_seed: u64,
        /// Write the per-parameter table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every architecture variant and compare validation errors.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write synthetic skeleton sequences as CSV files.
    Synth {
        #[arg(long, value_enum, default_value_t = Kind::WalkLike)]
        kind: Kind,
        #[arg(long, default_value_t = 4)]
        joints: usize,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Shape => 4,
        ErrorCategory::Numeric => 5,
        ErrorCategory::Internal => 6,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> ExitCode {
    let category = e.category();
    eprintln!("error[{}]: {e}", category.as_str());
    ExitCode::from(exit_code(category))
}
