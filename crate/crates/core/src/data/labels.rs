use super::recording::EegRecording;
use crate::error::{Error, Result};

pub const DEAP_THRESHOLD: f64 = 5.0;
pub const SEED_CROP_S: f64 = 150.0;

/// Binary DEAP class from a 1-9 self-assessment rating: `< 5 -> 0`, `>= 5 -> 1`.
pub fn label_deap(rating: f64) -> Result<usize> {
    if !(1.0..=9.0).contains(&rating) {
        return Err(Error::Validation(format!("DEAP rating {rating} outside 1..=9")));
    }
    Ok(usize::from(rating >= DEAP_THRESHOLD))
}

/// SEED emotion label to class. Neutral trials are dropped (`None`).
/// Accepts the names or the native `-1 / 0 / 1` codes.
pub fn label_seed(label: &str) -> Result<Option<usize>> {
    match label.trim().to_ascii_lowercase().as_str() {
        "negative" | "-1" => Ok(Some(0)),
        "positive" | "1" => Ok(Some(1)),
        "neutral" | "0" => Ok(None),
        other => Err(Error::Validation(format!("unknown SEED label {other:?}"))),
    }
}

/// Central 150 s of a SEED trial, starting at `floor((T - 150 * rate) / 2)`.
pub fn seed_central_crop(rec: &EegRecording) -> Result<EegRecording> {
    let want = (SEED_CROP_S * rec.sample_rate_hz).round() as usize;
    let t = rec.n_samples();
    if t < want {
        return Err(Error::Validation(format!(
            "{}: {:.1} s is shorter than the {SEED_CROP_S} s crop",
            rec.subject,
            rec.duration_s()
        )));
    }
    let start = (t - want) / 2;
    let mut out = rec.clone();
    out.samples = rec.samples.slice_rows(start, want)?;
    let offset = start as f64 / rec.sample_rate_hz;
    let end = want as f64 / rec.sample_rate_hz;
    out.annotations = rec
        .annotations
        .iter()
        .filter(|a| a.end_s > offset && a.start_s < offset + end)
        .map(|a| super::Annotation {
            label: a.label.clone(),
            start_s: (a.start_s - offset).max(0.0),
            end_s: (a.end_s - offset).min(end),
        })
        .collect();
    out.trials.clear();
    Ok(out)
}
