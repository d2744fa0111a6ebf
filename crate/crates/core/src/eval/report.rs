use std::path::Path;

use super::loso::RunSummary;
use crate::error::Result;

pub fn write_json_report(summary: &RunSummary, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(summary)?)?;
    Ok(())
}

/// One row per fold plus a final `mean` row carrying the std.
pub fn write_csv_report(summary: &RunSummary, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fold", "subject", "n_windows", "accuracy", "std"])?;
    for f in &summary.folds {
        w.write_record([
            f.fold.to_string(),
            f.test_subject.clone(),
            f.labels.len().to_string(),
            format!("{:.6}", f.accuracy),
            String::new(),
        ])?;
    }
    w.write_record([
        "mean".to_string(),
        String::new(),
        summary.folds.iter().map(|f| f.labels.len()).sum::<usize>().to_string(),
        format!("{:.6}", summary.mean),
        format!("{:.6}", summary.std),
    ])?;
    w.flush()?;
    Ok(())
}
