use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{FoldInput, Pipeline};
use crate::data::{LabeledWindow, SubjectWindows};
use crate::derive_seed;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<String>,
    pub test: String,
}

/// One fold per subject; each subject is held out exactly once.
pub fn loso_split(subjects: &[String]) -> Result<Vec<Fold>> {
    if subjects.len() < 2 {
        return Err(Error::Config(format!("LOSO needs at least 2 subjects, got {}", subjects.len())));
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = subjects.iter().find(|s| !seen.insert(s.as_str())) {
        return Err(Error::Config(format!("subject {dup} listed twice")));
    }
    Ok(subjects
        .iter()
        .enumerate()
        .map(|(index, test)| Fold {
            index,
            train: subjects.iter().filter(|s| *s != test).cloned().collect(),
            test: test.clone(),
        })
        .collect())
}

pub fn config_hash(config: &serde_json::Value) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(config.to_string().as_bytes()))
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_subject: String,
    pub seed: u64,
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
    pub accuracy: f64,
    #[serde(default)]
    pub encoder_losses: Vec<f64>,
    #[serde(default)]
    pub classifier_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub test_subject: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub task: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// SHA-256 of the compact JSON encoding of `config`.
    pub config_hash: String,
    pub folds: Vec<FoldResult>,
    pub skipped: Vec<SkippedFold>,
    /// Subjects missing a class among their own windows.
    pub warnings: Vec<String>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

impl RunSummary {
    pub fn accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.accuracy).collect()
    }

    pub fn subject_accuracy(&self) -> BTreeMap<String, f64> {
        self.folds.iter().map(|f| (f.test_subject.clone(), f.accuracy)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LosoOptions {
    pub task: String,
    pub seed: u64,
    /// Run folds concurrently. Results are identical to the sequential run.
    pub parallel: bool,
    pub classes: usize,
}

impl Default for LosoOptions {
    fn default() -> Self {
        Self {
            task: String::new(),
            seed: 0,
            parallel: false,
            classes: 2,
        }
    }
}

/// Runs every fold through `pipeline` and aggregates held-out accuracy.
pub fn run_loso(windows: &SubjectWindows, pipeline: &dyn Pipeline, opts: &LosoOptions) -> Result<RunSummary> {
    let subjects: Vec<String> = windows.keys().cloned().collect();
    let folds = loso_split(&subjects)?;
    let mut warnings = Vec::new();
    for (s, ws) in windows {
        for class in 0..opts.classes {
            if !ws.iter().any(|w| w.label == class) {
                warnings.push(format!("{s} has no windows of class {class}"));
            }
        }
    }

    let run = |fold: &Fold| -> Result<std::result::Result<FoldResult, SkippedFold>> {
        let train: Vec<&LabeledWindow> = fold.train.iter().flat_map(|s| windows[s].iter()).collect();
        let test: Vec<&LabeledWindow> = windows[&fold.test].iter().collect();
        let skip = |reason: String| {
            log::warn!("fold {} ({}): skipped, {reason}", fold.index, fold.test);
            Ok(Err(SkippedFold {
                test_subject: fold.test.clone(),
                reason,
            }))
        };
        let first = train.first().map(|w| w.label);
        if train.iter().all(|w| Some(w.label) == first) {
            return skip("training windows hold a single class".into());
        }
        if test.is_empty() {
            return skip("held-out subject has no windows".into());
        }
        let seed = derive_seed(opts.seed, fold.index as u64);
        let input = FoldInput {
            index: fold.index,
            test_subject: &fold.test,
            train: &train,
            test: &test,
            seed,
        };
        let outcome = pipeline.run_fold(&input)?;
        if outcome.predictions.len() != test.len() {
            return Err(Error::Contract(format!(
                "pipeline returned {} predictions for {} windows",
                outcome.predictions.len(),
                test.len()
            )));
        }
        let labels: Vec<usize> = test.iter().map(|w| w.label).collect();
        let hits = outcome.predictions.iter().zip(&labels).filter(|(p, l)| p == l).count();
        let accuracy = hits as f64 / labels.len() as f64;
        log::info!("fold {} ({}): accuracy {accuracy:.4}", fold.index, fold.test);
        Ok(Ok(FoldResult {
            fold: fold.index,
            test_subject: fold.test.clone(),
            seed,
            predictions: outcome.predictions,
            labels,
            accuracy,
            encoder_losses: outcome.encoder_losses,
            classifier_losses: outcome.classifier_losses,
        }))
    };
    let results: Vec<_> = if opts.parallel {
        folds.par_iter().map(run).collect()
    } else {
        folds.iter().map(run).collect()
    };

    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r? {
            Ok(f) => done.push(f),
            Err(s) => skipped.push(s),
        }
    }
    let (mean, std) = mean_std(&done.iter().map(|f| f.accuracy).collect::<Vec<_>>());
    let config = pipeline.describe();
    Ok(RunSummary {
        task: opts.task.clone(),
        seed: opts.seed,
        config_hash: config_hash(&config),
        config,
        folds: done,
        skipped,
        warnings,
        mean,
        std,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub test_subject: String,
    /// Artifact names compared, in pipeline order.
    pub artifacts: Vec<String>,
    /// Names whose bytes changed under perturbation.
    pub changed: Vec<String>,
}

impl LeakageReport {
    pub fn clean(&self) -> bool {
        self.changed.is_empty() && !self.artifacts.is_empty()
    }
}

/// Fits fold `fold` twice, the second time with every held-out window passed
/// through `perturb`, and lists fitted artifacts whose bytes differ.
pub fn leakage_check(
    windows: &SubjectWindows,
    pipeline: &dyn Pipeline,
    seed: u64,
    fold: usize,
    perturb: impl Fn(&LabeledWindow) -> LabeledWindow,
) -> Result<LeakageReport> {
    let subjects: Vec<String> = windows.keys().cloned().collect();
    let folds = loso_split(&subjects)?;
    let f = folds
        .get(fold)
        .ok_or_else(|| Error::Config(format!("fold {fold} out of range for {} subjects", subjects.len())))?;
    let train: Vec<&LabeledWindow> = f.train.iter().flat_map(|s| windows[s].iter()).collect();
    let original: Vec<&LabeledWindow> = windows[&f.test].iter().collect();
    let changed_test: Vec<LabeledWindow> = original.iter().map(|w| perturb(w)).collect();
    let changed_refs: Vec<&LabeledWindow> = changed_test.iter().collect();
    let run = |test: &[&LabeledWindow]| {
        pipeline.run_fold(&FoldInput {
            index: f.index,
            test_subject: &f.test,
            train: &train,
            test,
            seed: derive_seed(seed, f.index as u64),
        })
    };
    let a = run(&original)?;
    let b = run(&changed_refs)?;
    let names: Vec<String> = a.artifacts.iter().map(|(n, _)| n.clone()).collect();
    let mut changed: Vec<String> = a
        .artifacts
        .iter()
        .zip(&b.artifacts)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.clone())
        .collect();
    if a.artifacts.len() != b.artifacts.len() {
        changed.push("<artifact count>".into());
    }
    Ok(LeakageReport {
        test_subject: f.test.clone(),
        artifacts: names,
        changed,
    })
}

/// Averages each subject's accuracy across sessions, then summarises.
pub fn seed_session_average(sessions: &[RunSummary]) -> Result<RunSummary> {
    let first = sessions
        .first()
        .ok_or_else(|| Error::Config("no session summaries to average".into()))?;
    let subjects: Vec<String> = first.subject_accuracy().into_keys().collect();
    for s in sessions {
        let other: Vec<String> = s.subject_accuracy().into_keys().collect();
        if other != subjects {
            return Err(Error::Config(format!("session subject sets differ: {subjects:?} vs {other:?}")));
        }
    }
    let n = sessions.len() as f64;
    let folds: Vec<FoldResult> = subjects
        .iter()
        .enumerate()
        .map(|(i, subj)| {
            let acc = sessions.iter().map(|s| s.subject_accuracy()[subj]).sum::<f64>() / n;
            let mut predictions = Vec::new();
            let mut labels = Vec::new();
            for s in sessions {
                if let Some(f) = s.folds.iter().find(|f| &f.test_subject == subj) {
                    predictions.extend_from_slice(&f.predictions);
                    labels.extend_from_slice(&f.labels);
                }
            }
            FoldResult {
                fold: i,
                test_subject: subj.clone(),
                seed: first.seed,
                predictions,
                labels,
                accuracy: acc,
                encoder_losses: Vec::new(),
                classifier_losses: Vec::new(),
            }
        })
        .collect();
    let (mean, std) = mean_std(&folds.iter().map(|f| f.accuracy).collect::<Vec<_>>());
    Ok(RunSummary {
        task: first.task.clone(),
        seed: first.seed,
        config: first.config.clone(),
        config_hash: first.config_hash.clone(),
        folds,
        skipped: sessions.iter().flat_map(|s| s.skipped.clone()).collect(),
        warnings: sessions.iter().flat_map(|s| s.warnings.clone()).collect(),
        mean,
        std,
    })
}
