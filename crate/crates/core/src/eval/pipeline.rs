use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{train_classifier, ClassifierConfig, ClassifierModel, ClassifierTrainConfig};
use crate::data::{LabeledWindow, ZScore};
use crate::encoder::{train_autoencoder, AutoencoderConfig, AutoencoderModel, AutoencoderTrainConfig, PcaModel};
use crate::error::{Error, Result};
use crate::tensor::{encode_checkpoint, Tensor};
use crate::{derive_seed, seeded_rng};

/// Data handed to a pipeline for one fold. Held-out labels are visible only
/// so that the oracle stub can exist; real pipelines must not read them.
pub struct FoldInput<'a> {
    pub index: usize,
    pub test_subject: &'a str,
    pub train: &'a [&'a LabeledWindow],
    pub test: &'a [&'a LabeledWindow],
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FoldOutcome {
    /// One class per held-out window, in input order.
    pub predictions: Vec<usize>,
    pub encoder_losses: Vec<f64>,
    pub classifier_losses: Vec<f64>,
    /// Serialized fitted state, `(name, bytes)`.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

pub trait Pipeline: Sync {
    fn run_fold(&self, fold: &FoldInput) -> Result<FoldOutcome>;

    /// Configuration snapshot stored in run summaries.
    fn describe(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Predicts the true held-out labels.
pub struct OracleStub;

impl Pipeline for OracleStub {
    fn run_fold(&self, fold: &FoldInput) -> Result<FoldOutcome> {
        Ok(FoldOutcome {
            predictions: fold.test.iter().map(|w| w.label).collect(),
            ..FoldOutcome::default()
        })
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "pipeline": "oracle" })
    }
}

/// Uniform random classes, seeded by the fold seed.
pub struct RandomStub {
    pub classes: usize,
}

impl Pipeline for RandomStub {
    fn run_fold(&self, fold: &FoldInput) -> Result<FoldOutcome> {
        if self.classes == 0 {
            return Err(Error::Config("random stub needs at least one class".into()));
        }
        let mut rng = seeded_rng(fold.seed);
        Ok(FoldOutcome {
            predictions: fold.test.iter().map(|_| rng.random_range(0..self.classes)).collect(),
            ..FoldOutcome::default()
        })
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "pipeline": "random", "classes": self.classes })
    }
}

pub struct ConstantStub {
    pub class: usize,
}

impl Pipeline for ConstantStub {
    fn run_fold(&self, fold: &FoldInput) -> Result<FoldOutcome> {
        Ok(FoldOutcome {
            predictions: vec![self.class; fold.test.len()],
            ..FoldOutcome::default()
        })
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "pipeline": "constant", "class": self.class })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Autoencoder,
    Pca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub encoder: EncoderKind,
    pub latent_dims: usize,
    /// Per-timestep bias in the encoder's channel attention.
    pub time_bias: bool,
    /// Z-score channels with statistics of the training subjects.
    pub normalize: bool,
    /// Reuse a fitted encoder when the same fold sees identical training
    /// windows again (e.g. valence then arousal).
    pub share_encoder: bool,
    /// `seed` is replaced by a value derived from the fold seed.
    pub autoencoder: AutoencoderTrainConfig,
    /// `timesteps`, `features` and `classes` are filled in from the data.
    pub classifier: ClassifierConfig,
    /// `seed` is replaced by a value derived from the fold seed.
    pub classifier_train: ClassifierTrainConfig,
    pub classes: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::Autoencoder,
            latent_dims: 8,
            time_bias: true,
            normalize: true,
            share_encoder: true,
            autoencoder: AutoencoderTrainConfig::default(),
            classifier: ClassifierConfig::default(),
            classifier_train: ClassifierTrainConfig::default(),
            classes: 2,
        }
    }
}

/// A fitted encoder; cheap to clone.
#[derive(Debug, Clone)]
pub enum FittedEncoder {
    Autoencoder(Arc<AutoencoderModel<f32>>),
    Pca(Arc<PcaModel>),
}

impl FittedEncoder {
    pub fn encode(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        match self {
            Self::Autoencoder(m) => m.encode(x),
            Self::Pca(m) => m.transform(x),
        }
    }

    fn artifact(&self) -> Result<(String, Vec<u8>)> {
        Ok(match self {
            Self::Autoencoder(m) => ("encoder.eawt".into(), encode_checkpoint(&m.to_checkpoint())?),
            Self::Pca(m) => ("encoder.pca.json".into(), serde_json::to_vec(m.as_ref())?),
        })
    }
}

/// Everything one fold learns from its training subjects.
#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub zscore: Option<ZScore>,
    pub encoder: FittedEncoder,
    pub classifier: ClassifierModel<f32>,
    pub encoder_losses: Vec<f64>,
    pub classifier_losses: Vec<f64>,
}

impl FittedPipeline {
    /// Normalised raw window to latent sequence.
    pub fn latents(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        match &self.zscore {
            Some(z) => self.encoder.encode(&z.apply(x)?),
            None => self.encoder.encode(x),
        }
    }

    pub fn predict_many(&self, xs: &[&Tensor<f32>]) -> Result<Vec<usize>> {
        let z: Vec<Tensor<f32>> = xs.par_iter().map(|x| self.latents(x)).collect::<Result<_>>()?;
        self.classifier.predict_many(&z)
    }

    /// Serialized fitted state, `(name, bytes)`.
    pub fn artifacts(&self) -> Result<Vec<(String, Vec<u8>)>> {
        let mut out = Vec::new();
        if let Some(z) = &self.zscore {
            out.push(("zscore.json".to_string(), serde_json::to_vec(z)?));
        }
        out.push(self.encoder.artifact()?);
        out.push(("classifier.eawt".into(), encode_checkpoint(&self.classifier.to_checkpoint())?));
        Ok(out)
    }
}

/// Normalise, fit the encoder on training windows only, encode, then train
/// and apply the classifier.
pub struct LatentPipeline {
    pub config: PipelineConfig,
    cache: Mutex<EncoderCache>,
}

/// Keyed by (test subject, fold seed, training-data fingerprint).
type EncoderCache = HashMap<(String, u64, u64), (FittedEncoder, Vec<f64>)>;

impl LatentPipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Self {
            config,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn fit_encoder(&self, index: usize, key: (String, u64), train: &[Tensor<f32>]) -> Result<(FittedEncoder, Vec<f64>)> {
        let cfg = &self.config;
        let key = (key.0, key.1, fingerprint(train));
        if cfg.share_encoder {
            if let Some(f) = self.cache.lock().expect("encoder cache poisoned").get(&key) {
                log::info!("fold {index}: reusing fitted encoder");
                return Ok(f.clone());
            }
        }
        let (t, c) = train[0].dims2()?;
        let fitted = match cfg.encoder {
            EncoderKind::Autoencoder => {
                let ae_cfg = AutoencoderConfig {
                    time_bias: cfg.time_bias,
                    ..AutoencoderConfig::new(c, cfg.latent_dims, t)
                };
                let train_cfg = AutoencoderTrainConfig {
                    seed: derive_seed(key.1, 0),
                    ..cfg.autoencoder
                };
                let (model, history) = train_autoencoder(train, ae_cfg, &train_cfg)?;
                (FittedEncoder::Autoencoder(Arc::new(model)), history.epoch_losses)
            }
            EncoderKind::Pca => (FittedEncoder::Pca(Arc::new(PcaModel::fit(train, cfg.latent_dims)?)), Vec::new()),
        };
        if cfg.share_encoder {
            self.cache.lock().expect("encoder cache poisoned").insert(key, fitted.clone());
        }
        Ok(fitted)
    }

    /// Fits normaliser, encoder and classifier on labelled training windows.
    /// `subject` and `seed` identify the fold for encoder sharing.
    pub fn fit(&self, index: usize, subject: &str, train: &[&LabeledWindow], seed: u64) -> Result<FittedPipeline> {
        let cfg = &self.config;
        if train.is_empty() {
            return Err(Error::Config("fold has no training windows".into()));
        }
        let zscore = if cfg.normalize { Some(ZScore::fit(train.iter().map(|w| &w.samples))?) } else { None };
        let train_x: Vec<Tensor<f32>> = match &zscore {
            Some(z) => train.iter().map(|w| z.apply(&w.samples)).collect::<Result<_>>()?,
            None => train.iter().map(|w| w.samples.clone()).collect(),
        };
        let (encoder, encoder_losses) = self.fit_encoder(index, (subject.to_string(), seed), &train_x)?;
        let train_z: Vec<Tensor<f32>> = train_x.par_iter().map(|x| encoder.encode(x)).collect::<Result<_>>()?;
        let (t, l) = train_z[0].dims2()?;
        let clf_cfg = ClassifierConfig {
            timesteps: t,
            features: l,
            classes: cfg.classes,
            ..cfg.classifier
        };
        let clf_train = ClassifierTrainConfig {
            seed: derive_seed(seed, 1),
            ..cfg.classifier_train
        };
        let data: Vec<(Tensor<f32>, usize)> = train_z.into_iter().zip(train.iter().map(|w| w.label)).collect();
        let (classifier, history) = train_classifier(&data, clf_cfg, &clf_train)?;
        Ok(FittedPipeline {
            zscore,
            encoder,
            classifier,
            encoder_losses,
            classifier_losses: history.epoch_losses,
        })
    }
}

fn fingerprint(windows: &[Tensor<f32>]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for w in windows {
        w.shape().hash(&mut h);
        for v in w.data() {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

impl Pipeline for LatentPipeline {
    fn run_fold(&self, fold: &FoldInput) -> Result<FoldOutcome> {
        let fitted = self.fit(fold.index, fold.test_subject, fold.train, fold.seed)?;
        let test: Vec<&Tensor<f32>> = fold.test.iter().map(|w| &w.samples).collect();
        Ok(FoldOutcome {
            predictions: fitted.predict_many(&test)?,
            artifacts: fitted.artifacts()?,
            encoder_losses: fitted.encoder_losses,
            classifier_losses: fitted.classifier_losses,
        })
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "pipeline": "latent", "config": self.config })
    }
}
