use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::chb::{parse_chb_summary, seizure_context, segment_chb, ChbConfig};
use super::container::read_container;
use super::edf::read_edf;
use super::labels::{label_deap, label_seed, seed_central_crop};
use super::windows::{LabeledWindow, TaskTag};
use crate::error::{Error, Result};

/// Windows grouped by subject id, in sorted subject order.
pub type SubjectWindows = BTreeMap<String, Vec<LabeledWindow>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Deap,
    Seed,
    Chbmit,
    Synthetic,
}

pub const CONTAINER_EXT: &str = "eegc";

fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("data directory {} not found", dir.display()),
        )));
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case(ext)))
        .collect();
    out.sort();
    Ok(out)
}

fn push(map: &mut SubjectWindows, w: LabeledWindow) {
    map.entry(w.subject.clone()).or_default().push(w);
}

/// DEAP trial containers carrying `valence` / `arousal` ratings. Each trial
/// is one whole-trial window.
pub fn load_deap(dir: impl AsRef<Path>, task: TaskTag) -> Result<SubjectWindows> {
    let key = match task {
        TaskTag::Valence => "valence",
        TaskTag::Arousal => "arousal",
        other => return Err(Error::Config(format!("DEAP has no {other} task"))),
    };
    let mut out = SubjectWindows::new();
    for path in files_with_ext(dir.as_ref(), CONTAINER_EXT)? {
        let rec = read_container(&path)?;
        if rec.trials.is_empty() {
            return Err(Error::Validation(format!("{}: no trial metadata", path.display())));
        }
        for trial in &rec.trials {
            let rating = trial
                .ratings
                .get(key)
                .ok_or_else(|| Error::Validation(format!("{}: trial {} lacks a {key} rating", path.display(), trial.index)))?;
            push(
                &mut out,
                LabeledWindow {
                    subject: rec.subject.clone(),
                    samples: rec.trial_samples(trial)?,
                    label: label_deap(*rating)?,
                    task,
                    source_start: trial.start_sample,
                },
            );
        }
    }
    Ok(out)
}

/// SEED trial containers, cropped to the central 150 s. Neutral trials are
/// dropped. `session` filters on the trial's session number.
pub fn load_seed(dir: impl AsRef<Path>, session: Option<u32>) -> Result<SubjectWindows> {
    let mut out = SubjectWindows::new();
    for path in files_with_ext(dir.as_ref(), CONTAINER_EXT)? {
        let rec = read_container(&path)?;
        for trial in &rec.trials {
            if session.is_some() && trial.session != session {
                continue;
            }
            let label = trial
                .label
                .as_deref()
                .ok_or_else(|| Error::Validation(format!("{}: trial {} has no label", path.display(), trial.index)))?;
            let Some(class) = label_seed(label)? else {
                continue;
            };
            let mut one = rec.clone();
            one.samples = rec.trial_samples(trial)?;
            one.annotations.clear();
            one.trials.clear();
            let cropped = seed_central_crop(&one)?;
            let offset = (one.n_samples() - cropped.n_samples()) / 2;
            push(
                &mut out,
                LabeledWindow {
                    subject: rec.subject.clone(),
                    samples: cropped.samples,
                    label: class,
                    task: TaskTag::PosNeg,
                    source_start: trial.start_sample + offset,
                },
            );
        }
    }
    Ok(out)
}

/// CHB-MIT patient folders (`dir/<patient>/*.edf` plus
/// `<patient>-summary.txt`), restricted to the listed patients.
pub fn load_chbmit(dir: impl AsRef<Path>, patients: &[String], task: TaskTag, cfg: &ChbConfig) -> Result<SubjectWindows> {
    if patients.is_empty() {
        return Err(Error::Config("CHB-MIT runs need an explicit patient list".into()));
    }
    let mut out = SubjectWindows::new();
    for patient in patients {
        let pdir = dir.as_ref().join(patient);
        let summary_path = pdir.join(format!("{patient}-summary.txt"));
        let summary = parse_chb_summary(&std::fs::read_to_string(&summary_path)?)?;
        for path in files_with_ext(&pdir, "edf")? {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let mut rec = read_edf(&path)?;
            rec.subject = patient.clone();
            if let Some(entry) = summary.iter().find(|f| f.file_name == name) {
                rec.annotations = entry.annotations();
            }
            rec.validate()?;
            let seg = segment_chb(&rec, task, cfg, &seizure_context(&summary, &name))?;
            for w in seg.windows {
                push(&mut out, w);
            }
        }
    }
    Ok(out)
}

/// Generic containers whose trials carry integer class labels (the synthetic
/// corpus).
pub fn load_windows_dir(dir: impl AsRef<Path>, task: TaskTag) -> Result<SubjectWindows> {
    let mut out = SubjectWindows::new();
    for path in files_with_ext(dir.as_ref(), CONTAINER_EXT)? {
        let rec = read_container(&path)?;
        for trial in &rec.trials {
            let label = trial
                .label
                .as_deref()
                .and_then(|l| l.parse::<usize>().ok())
                .ok_or_else(|| Error::Validation(format!("{}: trial {} has no class index", path.display(), trial.index)))?;
            push(
                &mut out,
                LabeledWindow {
                    subject: rec.subject.clone(),
                    samples: rec.trial_samples(trial)?,
                    label,
                    task,
                    source_start: trial.start_sample,
                },
            );
        }
    }
    Ok(out)
}
