mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affectgan_core::data_pipeline::DataError;
use affectgan_core::models::ModelError;
use affectgan_core::training::{Mode, TrainError};
use affectgan_core::audio_features::AudioError;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

/// Adversarial denoising and audio-visual affect estimation.
#[derive(Debug, Parser)]
#[command(name = "affectgan", version)]
struct Cli {
    /// Print a machine-readable JSON result on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Global seed; falls back to AFFECTGAN_SEED.
    #[arg(long, global = true, env = "AFFECTGAN_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic face/voice dataset.
    SynthData(SynthArgs),
    /// Write per-frame audio vectors for every clip of a manifest.
    Features(FeaturesArgs),
    /// Train a model from a config file.
    Train(TrainArgs),
    /// Score a checkpoint on one split.
    Eval(EvalArgs),
    /// Run the generator over PNG frames.
    Denoise(DenoiseArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub subjects: u64,
    /// Clips per subject.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub clips: u64,
    /// Frames per clip.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub frames: u64,
    #[arg(long, default_value_t = 25.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 16000)]
    pub audio_rate: u32,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// `fallback` or `csv:DIR` with one descriptor table per clip.
    #[arg(long, default_value = "fallback")]
    pub source: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `train.mode`.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Overrides `train.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    pub dump_config: bool,
    #[arg(long, required_unless_present = "dump_config")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "val")]
    pub split: String,
    /// `fallback`, `vectors:DIR` or `csv:DIR`.
    #[arg(long, default_value = "fallback")]
    pub lld_source: String,
    /// Overrides the mode stored in the checkpoint.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Feed clean frames instead of corrupted ones.
    #[arg(long)]
    pub clean: bool,
    /// Replace the latent code by zeros.
    #[arg(long)]
    pub zero_latent: bool,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Also write metrics.json and metrics.csv here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// A PNG file or a directory of PNG files.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = commands::Context { json: cli.json, seed: cli.seed };
    let result = match &cli.command {
        Command::SynthData(a) => commands::synth_data(&ctx, a),
        Command::Features(a) => commands::features(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Denoise(a) => commands::denoise(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
