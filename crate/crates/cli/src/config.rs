use std::path::{Path, PathBuf};

use latent_eeg::classifier::{ClassifierConfig, ClassifierTrainConfig};
use latent_eeg::data::{ChbConfig, DatasetKind, TaskTag};
use latent_eeg::encoder::AutoencoderTrainConfig;
use latent_eeg::eval::{EncoderKind, PipelineConfig};
use latent_eeg::synthetic::SyntheticConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a subcommand needs. Read from a TOML file; `--set` flags are
/// applied on top before deserialising.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    /// Defaults per dataset: valence, pos-neg, ictal-preictal, or the
    /// synthetic corpus task.
    pub task: Option<TaskTag>,
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Defaults to 16 for SEED and 8 otherwise.
    pub latent_dims: Option<usize>,
    pub parallel: bool,
    /// SEED sessions to evaluate separately and average. Empty pools all.
    pub sessions: Vec<u32>,
    /// CHB-MIT patients to load (required for that dataset).
    pub patients: Vec<String>,
    pub encoder: EncoderKind,
    pub normalize: bool,
    pub share_encoder: bool,
    pub time_bias: bool,
    pub autoencoder: AutoencoderTrainConfig,
    /// Layer widths; `timesteps`, `features` and `classes` come from the data.
    pub classifier: ClassifierConfig,
    pub classifier_train: ClassifierTrainConfig,
    pub chbmit: ChbConfig,
    pub synthetic: SyntheticConfig,
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Subject whose windows are traced; the first subject when unset.
    pub subject: Option<String>,
    pub max_windows: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            subject: None,
            max_windows: 4,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Synthetic,
            task: None,
            data_dir: "data".into(),
            output_dir: "runs/latest".into(),
            seed: 0,
            latent_dims: None,
            parallel: false,
            sessions: Vec::new(),
            patients: Vec::new(),
            encoder: EncoderKind::Autoencoder,
            normalize: true,
            share_encoder: true,
            time_bias: true,
            autoencoder: AutoencoderTrainConfig::default(),
            classifier: ClassifierConfig::default(),
            classifier_train: ClassifierTrainConfig::default(),
            chbmit: ChbConfig::default(),
            synthetic: SyntheticConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn task(&self) -> TaskTag {
        self.task.unwrap_or(match self.dataset {
            DatasetKind::Deap => TaskTag::Valence,
            DatasetKind::Seed => TaskTag::PosNeg,
            DatasetKind::Chbmit => TaskTag::IctalPreictal,
            DatasetKind::Synthetic => self.synthetic.task.tag(),
        })
    }

    pub fn latent_dims(&self) -> usize {
        self.latent_dims.unwrap_or(match self.dataset {
            DatasetKind::Seed => 16,
            _ => 8,
        })
    }

    /// Window length and sample rate the dataset produces.
    pub fn window_shape(&self) -> (usize, f64) {
        match self.dataset {
            DatasetKind::Deap => (8064, 128.0),
            DatasetKind::Seed => (30000, 200.0),
            DatasetKind::Chbmit => ((self.chbmit.window_s * 256.0).round() as usize, 256.0),
            DatasetKind::Synthetic => (self.synthetic.window_len, self.synthetic.sample_rate_hz),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            encoder: self.encoder,
            latent_dims: self.latent_dims(),
            time_bias: self.time_bias,
            normalize: self.normalize,
            share_encoder: self.share_encoder,
            autoencoder: self.autoencoder,
            classifier: self.classifier,
            classifier_train: self.classifier_train,
            classes: 2,
        }
    }

    /// Classifier config with data-dependent dimensions filled in.
    pub fn classifier_for(&self, timesteps: usize, features: usize) -> ClassifierConfig {
        ClassifierConfig {
            timesteps,
            features,
            classes: 2,
            ..self.classifier
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        let allowed: &[TaskTag] = match self.dataset {
            DatasetKind::Deap => &[TaskTag::Valence, TaskTag::Arousal],
            DatasetKind::Seed => &[TaskTag::PosNeg],
            DatasetKind::Chbmit => &[TaskTag::IctalPreictal, TaskTag::IctalInterictal, TaskTag::PreictalInterictal],
            DatasetKind::Synthetic => &[TaskTag::Spectral, TaskTag::Burst],
        };
        if !allowed.contains(&self.task()) {
            return bad("task", format!("{} is not a task of this dataset", self.task()));
        }
        if self.latent_dims() == 0 {
            return bad("latent_dims", "must be positive".into());
        }
        if self.dataset == DatasetKind::Chbmit && self.patients.is_empty() {
            return bad("patients", "CHB-MIT runs need an explicit patient list".into());
        }
        if self.dataset == DatasetKind::Synthetic && self.synthetic.task.tag() != self.task() {
            return bad("task", format!("synthetic.task is {}", self.synthetic.task.tag()));
        }
        if let Err(e) = self.synthetic.validate() {
            return bad("synthetic", e.to_string());
        }
        if self.autoencoder.batch_size == 0 {
            return bad("autoencoder.batch_size", "must be positive".into());
        }
        if self.classifier_train.batch_size == 0 {
            return bad("classifier_train.batch_size", "must be positive".into());
        }
        let (t, _) = self.window_shape();
        if let Err(e) = self.classifier_for(t, self.latent_dims()).validate() {
            return bad("classifier", e.to_string());
        }
        Ok(())
    }
}

/// Parses `--set` values as TOML literals, falling back to plain strings.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key {key:?} is malformed")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override {key}: {p} is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Loads the optional config file, applies `key=value` overrides, and
/// validates. Returns the config and the overrides as applied.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<(RunConfig, Vec<(String, String)>), CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                if e.kind() == std::io::ErrorKind::NotFound {
                    CliError::Config(format!("config file {} not found", p.display()))
                } else {
                    CliError::Io(e)
                }
            })?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    let mut applied = Vec::new();
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {o:?} is not key=value")))?;
        apply_override(&mut table, k.trim(), parse_value(v.trim()))?;
        applied.push((k.trim().to_string(), v.trim().to_string()));
    }
    let cfg: RunConfig = RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok((cfg, applied))
}
