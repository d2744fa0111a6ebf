//! Desk-scale synthetic EEG: per-subject random mixtures of shared
//! band-limited latent sources, with labels tied to one source.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{write_container, EegRecording, LabeledWindow, SubjectWindows, TaskTag, TrialInfo};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::{derive_seed, seeded_rng, Rng};

/// Class frequencies of the labelled source, in cycles per sample.
pub const CLASS_FREQS: [f64; 2] = [0.03125, 0.125];

/// Burst-task class frequencies; a burst spans only a few samples, so the
/// pair sits further apart.
pub const BURST_FREQS: [f64; 2] = [0.0625, 0.25];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub subjects: usize,
    pub channels: usize,
    pub sources: usize,
    /// Samples per subject recording.
    pub samples: usize,
    pub window_len: usize,
    pub sample_rate_hz: f64,
    pub task: SyntheticTask,
    /// Fraction of a window occupied by the burst (burst task).
    pub burst_fraction: f64,
    /// Which burst property carries the class (burst task).
    pub burst_label: BurstLabel,
    /// Approximate RMS of each mixed channel.
    pub amplitude: f64,
    /// Scale of the unlabelled sources relative to the labelled one.
    pub background: f64,
    /// Std of sensor noise added after mixing.
    pub noise_std: f64,
    /// Relative size of the subject-specific part of the mixing matrix.
    pub subject_spread: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticTask {
    /// Class sets the frequency of source 0 over the whole window.
    Spectral,
    /// Class sets the frequency of a short burst on source 0.
    Burst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BurstLabel {
    /// Class sets the burst frequency; position is uniform over the window.
    Frequency,
    /// Class 0 bursts lie in the first half of the window, class 1 in the
    /// second; frequency is fixed.
    Position,
}

impl SyntheticTask {
    pub fn tag(self) -> TaskTag {
        match self {
            Self::Spectral => TaskTag::Spectral,
            Self::Burst => TaskTag::Burst,
        }
    }
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            subjects: 4,
            channels: 32,
            sources: 8,
            samples: 512,
            window_len: 64,
            sample_rate_hz: 128.0,
            task: SyntheticTask::Spectral,
            burst_fraction: 0.1,
            burst_label: BurstLabel::Frequency,
            amplitude: 0.5,
            background: 1.0,
            noise_std: 0.02,
            subject_spread: 0.3,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn windows_per_subject(&self) -> usize {
        self.samples / self.window_len
    }

    pub fn burst_len(&self) -> usize {
        ((self.window_len as f64 * self.burst_fraction).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.subjects < 2 {
            return Err(Error::Config(format!("synthetic corpus needs at least 2 subjects, got {}", self.subjects)));
        }
        if self.channels == 0 || self.sources == 0 || self.window_len == 0 {
            return Err(Error::Config("channels, sources and window_len must be positive".into()));
        }
        if self.samples < self.window_len {
            return Err(Error::Config(format!("{} samples hold no {}-sample window", self.samples, self.window_len)));
        }
        if !(self.amplitude > 0.0 && self.noise_std >= 0.0 && self.background >= 0.0) {
            return Err(Error::Config("amplitude must be positive, noise_std and background non-negative".into()));
        }
        if !(0.0 < self.burst_fraction && self.burst_fraction < 0.5) {
            return Err(Error::Config(format!("burst_fraction {} not in (0, 0.5)", self.burst_fraction)));
        }
        Ok(())
    }
}

/// Generating parameters of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTruth {
    pub start_sample: usize,
    pub label: usize,
    /// Burst span within the window, `[start, start + len)`. Burst task only.
    pub burst: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub subject: String,
    /// `C x L` mixing matrix, row-major.
    pub mixing: Vec<Vec<f64>>,
    pub windows: Vec<WindowTruth>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: SyntheticConfig,
    pub recordings: Vec<EegRecording>,
    /// Clean latent sources per subject, `T x L`.
    pub sources: Vec<Tensor<f32>>,
    pub truth: Vec<SubjectTruth>,
}

fn gaussian(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Unit-variance band-limited signal: three sinusoids drawn from `band`.
fn band_signal(len: usize, band: (f64, f64), rng: &mut Rng) -> Vec<f64> {
    let parts: Vec<(f64, f64)> = (0..3)
        .map(|_| (rng.random_range(band.0..band.1), rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    // each sinusoid has variance 1/2, three of them 3/2
    let norm = (2.0f64 / 3.0).sqrt();
    (0..len)
        .map(|t| norm * parts.iter().map(|&(f, ph)| (std::f64::consts::TAU * f * t as f64 + ph).sin()).sum::<f64>())
        .collect()
}

fn tone(len: usize, freq: f64, rng: &mut Rng) -> Vec<f64> {
    let ph = rng.random_range(0.0..std::f64::consts::TAU);
    (0..len)
        .map(|t| std::f64::consts::SQRT_2 * (std::f64::consts::TAU * freq * t as f64 + ph).sin())
        .collect()
}

impl SyntheticCorpus {
    /// Labelled windows per subject, in recording order.
    pub fn windows(&self) -> Result<SubjectWindows> {
        let w = self.config.window_len;
        let mut out = SubjectWindows::new();
        for (rec, truth) in self.recordings.iter().zip(&self.truth) {
            let ws = truth
                .windows
                .iter()
                .map(|wt| {
                    Ok(LabeledWindow {
                        subject: rec.subject.clone(),
                        samples: rec.samples.slice_rows(wt.start_sample, w)?,
                        label: wt.label,
                        task: self.config.task.tag(),
                        source_start: wt.start_sample,
                    })
                })
                .collect::<Result<_>>()?;
            out.insert(rec.subject.clone(), ws);
        }
        Ok(out)
    }
}

/// Builds the corpus in memory.
pub fn make_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let (c, l, w) = (cfg.channels, cfg.sources, cfg.window_len);
    let n_win = cfg.windows_per_subject();
    let t = n_win * w;
    // shared mixing structure; subjects perturb it
    let mut shared_rng = seeded_rng(derive_seed(cfg.seed, 0));
    let scale = 1.0 / (l as f64).sqrt();
    // channel variance is about 1 + spread^2 before rescaling
    let gain = cfg.amplitude / (1.0 + cfg.subject_spread * cfg.subject_spread).sqrt();
    let shared: Vec<Vec<f64>> = (0..c).map(|_| (0..l).map(|_| gaussian(&mut shared_rng) * scale).collect()).collect();
    // source k occupies its own band; source 0 carries the label
    let bands: Vec<(f64, f64)> = (0..l)
        .map(|k| {
            let lo = 0.01 + 0.2 * k as f64 / l as f64;
            (lo, lo + 0.2 / l as f64)
        })
        .collect();

    let mut out = SyntheticCorpus {
        config: *cfg,
        recordings: Vec::new(),
        sources: Vec::new(),
        truth: Vec::new(),
    };
    for s in 0..cfg.subjects {
        let mut rng = seeded_rng(derive_seed(cfg.seed, 1 + s as u64));
        let subject = format!("subject{:02}", s + 1);
        let mixing: Vec<Vec<f64>> = shared
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&a| gain * (a + cfg.subject_spread * scale * gaussian(&mut rng)))
                    .collect()
            })
            .collect();
        let mut labels: Vec<usize> = (0..n_win).map(|i| i % 2).collect();
        labels.shuffle(&mut rng);

        let mut src = vec![0.0f64; t * l];
        let mut windows = Vec::with_capacity(n_win);
        for (wi, &label) in labels.iter().enumerate() {
            let start = wi * w;
            for k in 1..l {
                let sig = band_signal(w, bands[k], &mut rng);
                for (i, v) in sig.into_iter().enumerate() {
                    src[(start + i) * l + k] = cfg.background * v;
                }
            }
            let burst = match cfg.task {
                SyntheticTask::Spectral => {
                    for (i, v) in tone(w, CLASS_FREQS[label], &mut rng).into_iter().enumerate() {
                        src[(start + i) * l] = v;
                    }
                    None
                }
                SyntheticTask::Burst => {
                    let len = cfg.burst_len();
                    let (b0, freq) = match cfg.burst_label {
                        BurstLabel::Frequency => (rng.random_range(0..=w - len), BURST_FREQS[label]),
                        BurstLabel::Position => {
                            let half = w / 2;
                            let lo = label * half;
                            let hi = if label == 0 { half - len } else { w - len };
                            (rng.random_range(lo..=hi.max(lo)), BURST_FREQS[1])
                        }
                    };
                    // strong tone inside the burst, quiet elsewhere
                    let amp = (1.0 / cfg.burst_fraction).sqrt();
                    for (i, v) in tone(len, freq, &mut rng).into_iter().enumerate() {
                        src[(start + b0 + i) * l] = amp * v;
                    }
                    Some((b0, len))
                }
            };
            windows.push(WindowTruth {
                start_sample: start,
                label,
                burst,
            });
        }

        let mut x = vec![0.0f32; t * c];
        for i in 0..t {
            let sr = &src[i * l..(i + 1) * l];
            for (ch, row) in mixing.iter().enumerate() {
                let v: f64 = row.iter().zip(sr).map(|(a, b)| a * b).sum();
                x[i * c + ch] = (v + cfg.noise_std * gaussian(&mut rng)) as f32;
            }
        }
        let mut rec = EegRecording::new(
            subject.clone(),
            cfg.sample_rate_hz,
            (0..c).map(|i| format!("ch{:02}", i + 1)).collect(),
            Tensor::new(vec![t, c], x)?,
        )?;
        rec.trials = windows
            .iter()
            .enumerate()
            .map(|(i, wt)| TrialInfo {
                index: i,
                start_sample: wt.start_sample,
                n_samples: w,
                label: Some(wt.label.to_string()),
                ..TrialInfo::default()
            })
            .collect();
        out.recordings.push(rec);
        out.sources.push(Tensor::new(vec![t, l], src.iter().map(|&v| v as f32).collect())?);
        out.truth.push(SubjectTruth {
            subject,
            mixing,
            windows,
        });
    }
    Ok(out)
}

/// Writes `<subject>.eegc` per subject into `dir`, plus ground truth under
/// `dir/truth/`: latent sources as containers and `truth.json`.
pub fn write_synthetic(corpus: &SyntheticCorpus, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let truth_dir = dir.join("truth");
    std::fs::create_dir_all(&truth_dir)?;
    let mut written = Vec::new();
    for (rec, src) in corpus.recordings.iter().zip(&corpus.sources) {
        let path = dir.join(format!("{}.eegc", rec.subject));
        write_container(rec, &path)?;
        written.push(path);
        let l = src.shape()[1];
        let srec = EegRecording::new(
            rec.subject.clone(),
            rec.sample_rate_hz,
            (0..l).map(|k| format!("source{k}")).collect(),
            src.clone(),
        )?;
        let spath = truth_dir.join(format!("{}.sources.eegc", rec.subject));
        write_container(&srec, &spath)?;
        written.push(spath);
    }
    let tpath = truth_dir.join("truth.json");
    let doc = serde_json::json!({ "config": corpus.config, "subjects": corpus.truth });
    std::fs::write(&tpath, serde_json::to_vec_pretty(&doc)?)?;
    written.push(tpath);
    Ok(written)
}
