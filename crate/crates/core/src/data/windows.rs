use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Classification task a window belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskTag {
    Valence,
    Arousal,
    PosNeg,
    IctalPreictal,
    IctalInterictal,
    PreictalInterictal,
    Spectral,
    Burst,
}

impl TaskTag {
    pub fn name(self) -> &'static str {
        match self {
            Self::Valence => "valence",
            Self::Arousal => "arousal",
            Self::PosNeg => "pos-neg",
            Self::IctalPreictal => "ictal-preictal",
            Self::IctalInterictal => "ictal-interictal",
            Self::PreictalInterictal => "preictal-interictal",
            Self::Spectral => "spectral",
            Self::Burst => "burst",
        }
    }
}

impl std::fmt::Display for TaskTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A fixed-length labelled slice of one subject's recording.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub subject: String,
    /// `T_w x C`.
    pub samples: Tensor<f32>,
    pub label: usize,
    pub task: TaskTag,
    /// First sample of the window in its source recording.
    pub source_start: usize,
}

/// Cuts `len`-sample windows from `start` onwards, stepping by `len`.
pub fn split_windows(x: &Tensor<f32>, len: usize) -> Result<Vec<Tensor<f32>>> {
    let (t, _) = x.dims2()?;
    if len == 0 {
        return Err(Error::Config("window length must be positive".into()));
    }
    (0..t / len).map(|i| x.slice_rows(i * len, len)).collect()
}

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ZScore {
    /// Pools every row of every window. Constant channels get unit scale.
    pub fn fit<'a>(windows: impl IntoIterator<Item = &'a Tensor<f32>>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for w in windows {
            let (t, c) = w.dims2()?;
            if sum.is_empty() {
                sum = vec![0.0; c];
                sq = vec![0.0; c];
            } else if sum.len() != c {
                return shape_err(format!("z-score over windows with {} and {c} channels", sum.len()));
            }
            for i in 0..t {
                for (j, &v) in w.row(i).iter().enumerate() {
                    sum[j] += v as f64;
                    sq[j] += (v as f64) * (v as f64);
                }
            }
            n += t;
        }
        if n == 0 {
            return Err(Error::Config("z-score needs at least one window".into()));
        }
        let means: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let stds = sq
            .iter()
            .zip(&means)
            .map(|(q, m)| {
                let var = (q / n as f64 - m * m).max(0.0);
                if var > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { means, stds })
    }

    pub fn apply(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let (_, c) = x.dims2()?;
        if c != self.means.len() {
            return shape_err(format!("z-score fitted on {} channels, got {c}", self.means.len()));
        }
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % c;
            *v = ((*v as f64 - self.means[j]) / self.stds[j]) as f32;
        }
        Ok(out)
    }
}
