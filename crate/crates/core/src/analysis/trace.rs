use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::data::{read_container, write_container, EegRecording};
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Classifier activations around the time attention for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub sample_id: String,
    pub subject: String,
    /// `T' x F`.
    pub pre_attention: Tensor<f32>,
    /// `T' x F/2`.
    pub post_attention: Tensor<f32>,
    pub weights: Tensor<f32>,
    pub predicted: usize,
    pub probabilities: Vec<f64>,
    /// Window duration divided by `T'`.
    pub seconds_per_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    sample_id: String,
    subject: String,
    predicted: usize,
    probabilities: Vec<f64>,
    seconds_per_step: f64,
    steps: usize,
    pre_attention: String,
    post_attention: String,
    weights: String,
}

/// Paths written by [`dump_attention`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFiles {
    pub sidecar: PathBuf,
    pub pre_attention: PathBuf,
    pub post_attention: PathBuf,
    pub weights: PathBuf,
}

pub fn trace_activations(
    model: &ClassifierModel<f32>,
    window: &Tensor<f32>,
    sample_id: &str,
    subject: &str,
    sample_rate_hz: f64,
) -> Result<ActivationTrace> {
    if !(sample_rate_hz > 0.0) {
        return Err(Error::Config(format!("sample rate {sample_rate_hz} must be positive")));
    }
    let (logits, cap) = model.infer(window, true)?;
    let cap = cap.expect("capture requested");
    let probabilities = crate::classifier::softmax(&logits);
    let predicted = crate::classifier::argmax(&probabilities);
    let steps = cap.post_attention.shape()[0];
    let duration = window.shape()[0] as f64 / sample_rate_hz;
    Ok(ActivationTrace {
        sample_id: sample_id.to_string(),
        subject: subject.to_string(),
        pre_attention: cap.pre_attention,
        post_attention: cap.post_attention,
        weights: cap.weights,
        predicted,
        probabilities,
        seconds_per_step: duration / steps as f64,
    })
}

fn matrix_recording(subject: &str, prefix: &str, m: &Tensor<f32>, step_s: f64) -> Result<EegRecording> {
    let (_, f) = m.dims2()?;
    EegRecording::new(subject, 1.0 / step_s, (0..f).map(|i| format!("{prefix}{i:03}")).collect(), m.clone())
}

/// Runs the classifier with capture and writes `<stem>.json` plus three
/// containers (`.pre.eegc`, `.post.eegc`, `.weights.eegc`) into `dir`.
pub fn dump_attention(
    model: &ClassifierModel<f32>,
    window: &Tensor<f32>,
    sample_id: &str,
    subject: &str,
    sample_rate_hz: f64,
    dir: impl AsRef<Path>,
) -> Result<(ActivationTrace, TraceFiles)> {
    let trace = trace_activations(model, window, sample_id, subject, sample_rate_hz)?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let stem = sanitize(sample_id);
    let files = TraceFiles {
        sidecar: dir.join(format!("{stem}.json")),
        pre_attention: dir.join(format!("{stem}.pre.eegc")),
        post_attention: dir.join(format!("{stem}.post.eegc")),
        weights: dir.join(format!("{stem}.weights.eegc")),
    };
    let sp = trace.seconds_per_step;
    write_container(&matrix_recording(subject, "pre", &trace.pre_attention, sp)?, &files.pre_attention)?;
    write_container(&matrix_recording(subject, "post", &trace.post_attention, sp)?, &files.post_attention)?;
    write_container(&matrix_recording(subject, "w", &trace.weights, sp)?, &files.weights)?;
    let name = |p: &Path| p.file_name().unwrap().to_string_lossy().into_owned();
    let sidecar = Sidecar {
        sample_id: trace.sample_id.clone(),
        subject: trace.subject.clone(),
        predicted: trace.predicted,
        probabilities: trace.probabilities.clone(),
        seconds_per_step: sp,
        steps: trace.post_attention.shape()[0],
        pre_attention: name(&files.pre_attention),
        post_attention: name(&files.post_attention),
        weights: name(&files.weights),
    };
    std::fs::write(&files.sidecar, serde_json::to_vec_pretty(&sidecar)?)?;
    Ok((trace, files))
}

/// Loads a trace from its JSON sidecar; containers are resolved next to it.
pub fn read_attention(sidecar: impl AsRef<Path>) -> Result<ActivationTrace> {
    let sidecar = sidecar.as_ref();
    let meta: Sidecar = serde_json::from_slice(&std::fs::read(sidecar)?)?;
    let dir = sidecar.parent().unwrap_or(Path::new("."));
    let load = |f: &str| read_container(dir.join(f)).map(|r| r.samples);
    Ok(ActivationTrace {
        sample_id: meta.sample_id,
        subject: meta.subject,
        pre_attention: load(&meta.pre_attention)?,
        post_attention: load(&meta.post_attention)?,
        weights: load(&meta.weights)?,
        predicted: meta.predicted,
        probabilities: meta.probabilities,
        seconds_per_step: meta.seconds_per_step,
    })
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Fraction of total absolute activation lying inside the input-sample span
/// `[start, start + len)`. Each captured step covers `compression` input
/// samples and contributes in proportion to its overlap with the span.
pub fn mass_inside_span(post: &Tensor<f32>, compression: usize, span: (usize, usize)) -> Result<f64> {
    let (steps, _) = post.dims2()?;
    if compression == 0 {
        return shape_err("compression must be positive");
    }
    let (s0, s1) = (span.0, span.0 + span.1);
    if s1 > steps * compression {
        return shape_err(format!("span end {s1} beyond {} input samples", steps * compression));
    }
    let mut inside = 0.0;
    let mut total = 0.0;
    for t in 0..steps {
        let mass: f64 = post.row(t).iter().map(|v| v.abs() as f64).sum();
        let (a, b) = (t * compression, (t + 1) * compression);
        let overlap = b.min(s1).saturating_sub(a.max(s0));
        inside += mass * overlap as f64 / compression as f64;
        total += mass;
    }
    Ok(if total > 0.0 { inside / total } else { 0.0 })
}
