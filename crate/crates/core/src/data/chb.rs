//! Seizure-state windowing for CHB-MIT recordings.

use serde::{Deserialize, Serialize};

use super::recording::{Annotation, EegRecording};
use super::windows::{LabeledWindow, TaskTag};
use crate::error::{Error, Result};

/// Bipolar channels shared by the patients used for ictal vs pre-ictal.
pub const CHB_CHANNELS_22: [&str; 22] = [
    "FP1-F7", "F7-T7", "T7-P7", "P7-O1", "FP1-F3", "F3-C3", "C3-P3", "P3-O1", "FP2-F4", "F4-C4", "C4-P4", "P4-O2",
    "FP2-F8", "F8-T8", "T8-P8", "P8-O2", "FZ-CZ", "CZ-PZ", "P7-T7", "T7-FT9", "FT9-FT10", "FT10-T8",
];

/// Longitudinal bipolar montage shared by the patients of the other two tasks.
pub const CHB_CHANNELS_18: [&str; 18] = [
    "FP1-F7", "F7-T7", "T7-P7", "P7-O1", "FP1-F3", "F3-C3", "C3-P3", "P3-O1", "FP2-F4", "F4-C4", "C4-P4", "P4-O2",
    "FP2-F8", "F8-T8", "T8-P8", "P8-O2", "FZ-CZ", "CZ-PZ",
];

pub const SEIZURE_LABEL: &str = "seizure";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeizureState {
    Ictal,
    Preictal,
    Interictal,
}

/// The two states of a task, in class-index order.
pub fn task_states(task: TaskTag) -> Result<[SeizureState; 2]> {
    use SeizureState::*;
    match task {
        TaskTag::IctalPreictal => Ok([Ictal, Preictal]),
        TaskTag::IctalInterictal => Ok([Ictal, Interictal]),
        TaskTag::PreictalInterictal => Ok([Preictal, Interictal]),
        other => Err(Error::Config(format!("{other} is not a seizure task"))),
    }
}

pub fn task_channels(task: TaskTag) -> Result<&'static [&'static str]> {
    match task {
        TaskTag::IctalPreictal => Ok(&CHB_CHANNELS_22),
        TaskTag::IctalInterictal | TaskTag::PreictalInterictal => Ok(&CHB_CHANNELS_18),
        other => Err(Error::Config(format!("{other} is not a seizure task"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChbConfig {
    pub window_s: f64,
    /// Pre-ictal horizon before each onset.
    pub preictal_s: f64,
    /// Minimum distance from any seizure for inter-ictal windows.
    pub interictal_gap_s: f64,
}

impl Default for ChbConfig {
    fn default() -> Self {
        Self {
            window_s: 20.0,
            preictal_s: 1800.0,
            interictal_gap_s: 3600.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ChbSegmentation {
    pub windows: Vec<LabeledWindow>,
    pub warnings: Vec<String>,
}

/// Non-overlapping windows whose samples all share one seizure state.
///
/// Seizures come from the recording's `"seizure"` annotations plus `context`,
/// given in seconds relative to the recording start (may lie outside it).
pub fn segment_chb(
    rec: &EegRecording,
    task: TaskTag,
    cfg: &ChbConfig,
    context: &[(f64, f64)],
) -> Result<ChbSegmentation> {
    let states = task_states(task)?;
    let rec = rec.select_channels(task_channels(task)?)?;
    let rate = rec.sample_rate_hz;
    let len = (cfg.window_s * rate).round() as usize;
    if len == 0 {
        return Err(Error::Config(format!("window of {} s is empty", cfg.window_s)));
    }
    let to_i = |s: f64| (s * rate).round() as i64;
    let seizures: Vec<(i64, i64)> = rec
        .annotations
        .iter()
        .filter(|a| a.label.eq_ignore_ascii_case(SEIZURE_LABEL))
        .map(|a| (a.start_s, a.end_s))
        .chain(context.iter().copied())
        .map(|(a, b)| (to_i(a), to_i(b)))
        .collect();
    let pre = to_i(cfg.preictal_s);
    let gap = to_i(cfg.interictal_gap_s);

    let state_of = |s: i64, e: i64| -> Option<SeizureState> {
        if seizures.iter().any(|&(on, off)| on <= s && e <= off) {
            return Some(SeizureState::Ictal);
        }
        if seizures.iter().any(|&(on, off)| s < off && on < e) {
            return None;
        }
        if seizures.iter().any(|&(on, _)| e <= on && s >= on - pre) {
            return Some(SeizureState::Preictal);
        }
        if seizures.iter().all(|&(on, off)| e <= on - gap || s >= off + gap) {
            return Some(SeizureState::Interictal);
        }
        None
    };

    let mut out = ChbSegmentation::default();
    for k in 0..rec.n_samples() / len {
        let s = k * len;
        let Some(state) = state_of(s as i64, (s + len) as i64) else {
            continue;
        };
        let Some(label) = states.iter().position(|&st| st == state) else {
            continue;
        };
        out.windows.push(LabeledWindow {
            subject: rec.subject.clone(),
            samples: rec.samples.slice_rows(s, len)?,
            label,
            task,
            source_start: s,
        });
    }
    if out.windows.is_empty() {
        let msg = format!("{}: no {task} windows", rec.subject);
        log::warn!("{msg}");
        out.warnings.push(msg);
    }
    Ok(out)
}

/// One file entry of a CHB-MIT `chbNN-summary.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChbFileSummary {
    pub file_name: String,
    /// Clock start in seconds since the first file's midnight, unwrapped
    /// across days. `None` when the summary omits times.
    pub start_s: Option<f64>,
    pub end_s: Option<f64>,
    pub seizures: Vec<(f64, f64)>,
}

impl ChbFileSummary {
    pub fn annotations(&self) -> Vec<Annotation> {
        self.seizures
            .iter()
            .map(|&(a, b)| Annotation {
                label: SEIZURE_LABEL.into(),
                start_s: a,
                end_s: b,
            })
            .collect()
    }
}

fn clock(text: &str) -> Option<f64> {
    let mut parts = text.trim().split(':').map(|p| p.trim().parse::<f64>().ok());
    let h = parts.next()??;
    let m = parts.next()??;
    let s = parts.next()??;
    Some(h * 3600.0 + m * 60.0 + s)
}

fn seconds(text: &str) -> Option<f64> {
    text.trim().trim_end_matches("seconds").trim().parse().ok()
}

/// Parses a CHB-MIT summary file.
pub fn parse_chb_summary(text: &str) -> Result<Vec<ChbFileSummary>> {
    let mut files: Vec<ChbFileSummary> = Vec::new();
    let mut pending_start: Option<f64> = None;
    let mut day_offset = 0.0;
    let mut last_clock: Option<f64> = None;
    let mut unwrap = |raw: f64| {
        if let Some(prev) = last_clock {
            if raw + day_offset < prev {
                day_offset += 86_400.0;
            }
        }
        let t = raw + day_offset;
        last_clock = Some(t);
        t
    };
    for (lineno, line) in text.lines().enumerate() {
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        let key = key.trim().to_ascii_lowercase();
        let bad = || Error::Validation(format!("summary line {}: cannot parse {line:?}", lineno + 1));
        if key == "file name" {
            files.push(ChbFileSummary {
                file_name: value.trim().to_string(),
                start_s: None,
                end_s: None,
                seizures: Vec::new(),
            });
            continue;
        }
        let Some(cur) = files.last_mut() else {
            continue;
        };
        if key == "file start time" {
            cur.start_s = Some(unwrap(clock(value).ok_or_else(bad)?));
        } else if key == "file end time" {
            cur.end_s = Some(unwrap(clock(value).ok_or_else(bad)?));
        } else if key.starts_with("seizure") && key.ends_with("start time") {
            pending_start = Some(seconds(value).ok_or_else(bad)?);
        } else if key.starts_with("seizure") && key.ends_with("end time") {
            let start = pending_start.take().ok_or_else(bad)?;
            cur.seizures.push((start, seconds(value).ok_or_else(bad)?));
        }
    }
    Ok(files)
}

/// Seizures from the other files of a summary, relative to `file`'s start.
pub fn seizure_context(files: &[ChbFileSummary], file: &str) -> Vec<(f64, f64)> {
    let Some(me) = files.iter().find(|f| f.file_name == file) else {
        return Vec::new();
    };
    let Some(origin) = me.start_s else {
        return Vec::new();
    };
    files
        .iter()
        .filter(|f| f.file_name != file)
        .filter_map(|f| f.start_s.map(|s| (f, s - origin)))
        .flat_map(|(f, off)| f.seizures.iter().map(move |&(a, b)| (a + off, b + off)))
        .collect()
}
