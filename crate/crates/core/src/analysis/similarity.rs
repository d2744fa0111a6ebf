use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// `a . b / (|a| |b|)`, or `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot / (na * nb))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScore {
    pub channel: usize,
    pub name: String,
    pub cosine: f64,
    /// A zero-norm column made the score undefined; it is reported as 0.
    pub zero_norm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTable {
    /// Per latent dimension, channels sorted by descending cosine.
    pub ranked: Vec<Vec<ChannelScore>>,
}

impl SimilarityTable {
    pub fn flagged(&self) -> impl Iterator<Item = (usize, &ChannelScore)> {
        self.ranked
            .iter()
            .enumerate()
            .flat_map(|(l, row)| row.iter().filter(|s| s.zero_norm).map(move |s| (l, s)))
    }
}

/// Cosine similarity of every latent column (`T x L`) with every raw channel
/// column (`T x C`).
pub fn latent_channel_similarity(latent: &Tensor<f32>, raw: &Tensor<f32>, names: &[String]) -> Result<SimilarityTable> {
    let (t, l) = latent.dims2()?;
    let (tr, c) = raw.dims2()?;
    if t != tr {
        return shape_err(format!("latent has {t} steps, raw has {tr}"));
    }
    if !names.is_empty() && names.len() != c {
        return shape_err(format!("{} channel names for {c} channels", names.len()));
    }
    let col = |m: &Tensor<f32>, j: usize| m.column(j).into_iter().map(f64::from).collect::<Vec<f64>>();
    let raw_cols: Vec<Vec<f64>> = (0..c).map(|j| col(raw, j)).collect();
    let ranked = (0..l)
        .map(|k| {
            let z = col(latent, k);
            let mut row: Vec<ChannelScore> = raw_cols
                .iter()
                .enumerate()
                .map(|(j, x)| {
                    let s = cosine(&z, x);
                    ChannelScore {
                        channel: j,
                        name: names.get(j).cloned().unwrap_or_else(|| format!("ch{j}")),
                        cosine: s.unwrap_or(0.0),
                        zero_norm: s.is_none(),
                    }
                })
                .collect();
            row.sort_by(|a, b| b.cosine.total_cmp(&a.cosine).then(a.channel.cmp(&b.channel)));
            row
        })
        .collect();
    Ok(SimilarityTable { ranked })
}

/// Columns: latent, rank, channel, name, cosine, zero_norm.
pub fn write_similarity_csv(table: &SimilarityTable, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["latent", "rank", "channel", "name", "cosine", "zero_norm"])?;
    for (l, row) in table.ranked.iter().enumerate() {
        for (rank, s) in row.iter().enumerate() {
            w.write_record([
                l.to_string(),
                (rank + 1).to_string(),
                s.channel.to_string(),
                s.name.clone(),
                format!("{:.8}", s.cosine),
                s.zero_norm.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
