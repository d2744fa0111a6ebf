mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Train, evaluate and inspect latent EEG classifiers.
#[derive(Debug, Parser)]
#[command(name = "latent-eeg", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set classifier_train.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Shorthand for `--set output_dir=...`.
    #[arg(short, long, global = true)]
    output_dir: Option<PathBuf>,
    /// Shorthand for `--set data_dir=...`.
    #[arg(short, long, global = true)]
    data_dir: Option<PathBuf>,
    /// Shorthand for `--set seed=...`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub(crate) enum Command {
    /// Train the autoencoder on every window of the dataset.
    TrainAe,
    /// Encode containers into latent-sequence containers.
    Encode {
        /// Containers to encode; defaults to every container in the data dir.
        inputs: Vec<PathBuf>,
        /// Directory holding the trained autoencoder.
        #[arg(long)]
        model_dir: Option<PathBuf>,
    },
    /// Train the classifier on latents of a trained autoencoder.
    TrainClf {
        #[arg(long)]
        model_dir: Option<PathBuf>,
    },
    /// Leave-one-subject-out evaluation.
    Loso,
    /// Export classifier activations around the attention layer.
    DumpAttention {
        #[arg(long)]
        model_dir: Option<PathBuf>,
    },
    /// Latent/channel cosine tables and 2-D latent projections.
    LatentAnalysis {
        #[arg(long)]
        model_dir: Option<PathBuf>,
    },
    /// Write a synthetic corpus with ground truth.
    MakeSynthetic,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::TrainAe => "train-ae",
            Self::Encode { .. } => "encode",
            Self::TrainClf { .. } => "train-clf",
            Self::Loso => "loso",
            Self::DumpAttention { .. } => "dump-attention",
            Self::LatentAnalysis { .. } => "latent-analysis",
            Self::MakeSynthetic => "make-synthetic",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    MissingData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] latent_eeg::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) | Self::Core(latent_eeg::Error::Config(_)) => "config",
            Self::MissingData(_) => "missing-data",
            Self::Io(e) | Self::Core(latent_eeg::Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => "missing-data",
            Self::Core(latent_eeg::Error::Shape(_)) => "shape",
            Self::Core(latent_eeg::Error::Format(_)) => "format",
            _ => "runtime",
        }
    }

    fn exit_code(&self) -> u8 {
        match self.kind() {
            "config" => 2,
            "missing-data" => 3,
            _ => 1,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LATENT_EEG_LOG", "warn")).init();
    let cli = Cli::parse();
    let mut overrides = cli.overrides.clone();
    if let Some(d) = &cli.output_dir {
        overrides.push(format!("output_dir={}", toml_string(d)));
    }
    if let Some(d) = &cli.data_dir {
        overrides.push(format!("data_dir={}", toml_string(d)));
    }
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let result = config::load(cli.config.as_deref(), &overrides)
        .and_then(|(cfg, applied)| commands::run(cli.command, &cfg, cli.config.as_deref(), &applied));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let doc = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{doc}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn toml_string(p: &std::path::Path) -> String {
    toml::Value::String(p.to_string_lossy().into_owned()).to_string()
}
