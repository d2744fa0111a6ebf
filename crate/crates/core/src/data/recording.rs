use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
}

/// One trial (or window) stored inside a recording.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialInfo {
    pub index: usize,
    #[serde(default)]
    pub start_sample: usize,
    /// 0 means "to the end of the recording".
    #[serde(default)]
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<u32>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ratings: BTreeMap<String, f64>,
}

/// One subject's multichannel signal. `samples` is `T x C`.
#[derive(Debug, Clone, PartialEq)]
pub struct EegRecording {
    pub subject: String,
    pub sample_rate_hz: f64,
    pub channel_names: Vec<String>,
    pub samples: Tensor<f32>,
    pub annotations: Vec<Annotation>,
    pub trials: Vec<TrialInfo>,
}

impl EegRecording {
    pub fn new(subject: impl Into<String>, sample_rate_hz: f64, channel_names: Vec<String>, samples: Tensor<f32>) -> Result<Self> {
        let rec = Self {
            subject: subject.into(),
            sample_rate_hz,
            channel_names,
            samples,
            annotations: Vec::new(),
            trials: Vec::new(),
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn n_samples(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn n_channels(&self) -> usize {
        self.samples.shape()[1]
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        let (t, c) = self.samples.dims2()?;
        if self.channel_names.len() != c {
            return shape_err(format!("{} channel names for {c} channels", self.channel_names.len()));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Validation(format!("sample rate {} must be positive", self.sample_rate_hz)));
        }
        let dur = t as f64 / self.sample_rate_hz;
        for a in &self.annotations {
            if !(0.0 <= a.start_s && a.start_s <= a.end_s && a.end_s <= dur + 1e-9) {
                return Err(Error::Validation(format!(
                    "annotation {:?} [{}, {}] outside 0..{dur}",
                    a.label, a.start_s, a.end_s
                )));
            }
        }
        for tr in &self.trials {
            let end = tr.start_sample + tr.n_samples;
            if tr.start_sample >= t || end > t {
                return Err(Error::Validation(format!("trial {} spans {}..{end} of {t} samples", tr.index, tr.start_sample)));
            }
        }
        Ok(())
    }

    /// Samples of one trial, `n x C`.
    pub fn trial_samples(&self, trial: &TrialInfo) -> Result<Tensor<f32>> {
        let len = if trial.n_samples == 0 { self.n_samples() - trial.start_sample } else { trial.n_samples };
        self.samples.slice_rows(trial.start_sample, len)
    }

    /// Keeps the named channels in the given order. The first match wins when
    /// a name repeats.
    pub fn select_channels(&self, names: &[&str]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                self.channel_names
                    .iter()
                    .position(|c| c.eq_ignore_ascii_case(n))
                    .ok_or_else(|| Error::Validation(format!("channel {n} missing from {}", self.subject)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            channel_names: idx.iter().map(|&i| self.channel_names[i].clone()).collect(),
            samples: self.samples.select_columns(&idx)?,
            ..self.clone()
        })
    }
}
