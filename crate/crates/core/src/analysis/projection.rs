use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::PcaModel;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub subject: String,
    pub window: usize,
    pub step: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub points: Vec<ProjectedPoint>,
    pub pca: PcaModel,
    /// Mean distance between subject centroids over mean distance of points
    /// to their own centroid. `None` with fewer than two subjects.
    pub dispersion: Option<f64>,
}

/// Pools every time step of every window, fits a 2-component PCA and
/// projects. Input is `(subject, T x L window)` pairs.
pub fn project_latents_2d(windows: &[(String, Tensor<f32>)]) -> Result<Projection> {
    let n_points: usize = windows.iter().map(|(_, w)| w.shape().first().copied().unwrap_or(0)).sum();
    if n_points < 2 {
        return Err(Error::Config(format!("projection needs at least 2 points, got {n_points}")));
    }
    let tensors: Vec<Tensor<f32>> = windows.iter().map(|(_, w)| w.clone()).collect();
    let pca = PcaModel::fit(&tensors, 2)?;
    let mut points = Vec::with_capacity(n_points);
    // window index counts within each subject
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    for (subject, w) in windows {
        let window = counters.entry(subject).or_insert(0);
        let z = pca.transform(&w.cast::<f64>())?;
        for step in 0..z.shape()[0] {
            points.push(ProjectedPoint {
                subject: subject.clone(),
                window: *window,
                step,
                x: z.at2(step, 0),
                y: z.at2(step, 1),
            });
        }
        *window += 1;
    }
    let dispersion = dispersion(&points);
    Ok(Projection { points, pca, dispersion })
}

/// Inter-subject centroid distance over intra-subject spread.
pub fn dispersion(points: &[ProjectedPoint]) -> Option<f64> {
    let mut groups: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for p in points {
        groups.entry(&p.subject).or_default().push((p.x, p.y));
    }
    if groups.len() < 2 {
        return None;
    }
    let centroids: Vec<(f64, f64)> = groups
        .values()
        .map(|g| {
            let n = g.len() as f64;
            (g.iter().map(|p| p.0).sum::<f64>() / n, g.iter().map(|p| p.1).sum::<f64>() / n)
        })
        .collect();
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let mut inter = 0.0;
    let mut pairs = 0usize;
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            inter += dist(centroids[i], centroids[j]);
            pairs += 1;
        }
    }
    let intra: f64 = groups
        .values()
        .zip(&centroids)
        .flat_map(|(g, &c)| g.iter().map(move |&p| dist(p, c)))
        .sum::<f64>()
        / points.len() as f64;
    if intra == 0.0 {
        return None;
    }
    Some(inter / pairs as f64 / intra)
}

/// Columns: subject, window, step, x, y.
pub fn write_projection_csv(projection: &Projection, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in &projection.points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
