//! Command-line pipelines: synthetic data, augmentation, score generation,
//! scorer training, evaluation, embedder ablation and attention export.
//!
//! Every command writes into `--out` and finishes with `run_manifest.json`,
//! which lists each artifact with its SHA-256.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::run;
pub use config::{MqaConfig, SignalJoints, SynthKind};
pub use manifest::{RunManifest, RUN_MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "mqa", version, about = "Skeletal movement quality assessment")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "MQA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true, env = "MQA_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "MQA_OUT", default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic dataset.
    Synth {
        #[arg(long, value_enum)]
        kind: Option<SynthKind>,
        #[arg(long, value_enum)]
        signal: Option<SignalJoints>,
    },
    /// Apply the augmentation policy to every sequence of a dataset.
    Augment {
        #[arg(long)]
        input: PathBuf,
    },
    /// Fit per-exercise score models and write quality labels.
    GenScores {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train the scorer over several seeded runs per exercise.
    Train {
        #[arg(long)]
        input: PathBuf,
        /// Label CSV from gen-scores; clinical scores are used otherwise.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        exercise: Option<String>,
    },
    /// Recompute the MAE of a saved scorer checkpoint.
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Evaluate every sequence of the exercise, not only the validation split.
        #[arg(long)]
        all: bool,
    },
    /// Train and compare the four window embedders.
    Ablate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        exercise: Option<String>,
    },
    /// Export attention maps of a saved scorer as CSV (and SVG).
    Attention {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Restrict to one sequence; defaults to every sequence of the model's exercise.
        #[arg(long)]
        sequence: Option<String>,
        #[arg(long)]
        svg: bool,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_args<I, T>(args: I) -> anyhow::Result<RunManifest>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}
