use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Real, Tensor};

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric `n x n` matrix (row-major) by cyclic
/// Jacobi rotations. Returns eigenvalues in descending order and the matching
/// unit eigenvectors as columns of an `n x n` row-major matrix.
pub fn symmetric_eigen(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != n * n || n == 0 {
        return shape_err(format!("expected {n}x{n} matrix, got {} values", a.len()));
    }
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        // sign convention: largest-magnitude entry positive
        let col: Vec<f64> = (0..n).map(|k| v[k * n + src]).collect();
        let pivot = col.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[k * n + dst] = sign * col[k];
        }
    }
    Ok((values, vectors))
}

/// Linear baseline encoder: projects each time step's channel vector onto
/// the top principal axes of the pooled training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub means: Vec<f64>,
    /// `components[j]` is the unit axis for latent dimension `j` (length C).
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    /// Fits on the rows of every `T x C` window.
    pub fn fit<F: Real>(windows: &[Tensor<F>], latent_dims: usize) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::Config("PCA needs at least one window".into()))?;
        let (_, c) = first.dims2()?;
        if latent_dims == 0 || latent_dims > c {
            return Err(Error::Config(format!("PCA latent dims {latent_dims} not in 1..={c}")));
        }
        let mut means = vec![0.0; c];
        let mut count = 0usize;
        for w in windows {
            let (t, wc) = w.dims2()?;
            if wc != c {
                return shape_err(format!("PCA windows disagree on channels: {wc} vs {c}"));
            }
            for i in 0..t {
                for (m, &x) in means.iter_mut().zip(w.row(i)) {
                    *m += x.as_f64();
                }
            }
            count += t;
        }
        means.iter_mut().for_each(|m| *m /= count as f64);

        let mut cov = vec![0.0; c * c];
        let mut centred = vec![0.0; c];
        for w in windows {
            for i in 0..w.shape()[0] {
                for ((d, &x), m) in centred.iter_mut().zip(w.row(i)).zip(&means) {
                    *d = x.as_f64() - m;
                }
                for a in 0..c {
                    let da = centred[a];
                    for b in a..c {
                        cov[a * c + b] += da * centred[b];
                    }
                }
            }
        }
        let denom = (count.max(2) - 1) as f64;
        for a in 0..c {
            for b in a..c {
                let v = cov[a * c + b] / denom;
                cov[a * c + b] = v;
                cov[b * c + a] = v;
            }
        }
        let (values, vectors) = symmetric_eigen(&cov, c)?;
        let components = (0..latent_dims)
            .map(|j| (0..c).map(|k| vectors[k * c + j]).collect())
            .collect();
        Ok(Self {
            means,
            components,
            eigenvalues: values[..latent_dims].to_vec(),
        })
    }

    pub fn latent_dims(&self) -> usize {
        self.components.len()
    }

    /// `T x C` -> `T x L`.
    pub fn transform<F: Real>(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let (t, c) = x.dims2()?;
        if c != self.means.len() {
            return shape_err(format!("PCA fitted on {} channels, got {c}", self.means.len()));
        }
        let l = self.latent_dims();
        let mut out = Vec::with_capacity(t * l);
        for i in 0..t {
            let row = x.row(i);
            for comp in &self.components {
                let z: f64 = row
                    .iter()
                    .zip(&self.means)
                    .zip(comp)
                    .map(|((&v, m), w)| (v.as_f64() - m) * w)
                    .sum();
                out.push(F::lit(z));
            }
        }
        Tensor::new(vec![t, l], out)
    }

    /// `T x L` -> `T x C`.
    pub fn inverse_transform<F: Real>(&self, z: &Tensor<F>) -> Result<Tensor<F>> {
        let (t, l) = z.dims2()?;
        if l != self.latent_dims() {
            return shape_err(format!("PCA has {} components, got {l}", self.latent_dims()));
        }
        let c = self.means.len();
        let mut out = Vec::with_capacity(t * c);
        for i in 0..t {
            let zr = z.row(i);
            for k in 0..c {
                let v: f64 = self.means[k] + zr.iter().zip(&self.components).map(|(&a, w)| a.as_f64() * w[k]).sum::<f64>();
                out.push(F::lit(v));
            }
        }
        Tensor::new(vec![t, c], out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use rand::Rng as _;

    fn random_symmetric(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded_rng(seed);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = rng.random_range(-1.0..1.0);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        a
    }

    #[test]
    fn eigenvalues_match_nalgebra() {
        for (n, seed) in [(1, 1), (2, 2), (5, 3), (18, 4), (32, 5)] {
            let a = random_symmetric(n, seed);
            let (vals, vecs) = symmetric_eigen(&a, n).unwrap();
            let oracle = nalgebra::DMatrix::from_row_slice(n, n, &a).symmetric_eigen();
            let mut want: Vec<f64> = oracle.eigenvalues.iter().copied().collect();
            want.sort_by(|x, y| y.total_cmp(x));
            for (g, w) in vals.iter().zip(&want) {
                assert!((g - w).abs() < 1e-9, "n={n}: {g} vs {w}");
            }
            // A v = lambda v for every returned pair
            for j in 0..n {
                for i in 0..n {
                    let av: f64 = (0..n).map(|k| a[i * n + k] * vecs[k * n + j]).sum();
                    assert!((av - vals[j] * vecs[i * n + j]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let n = 12;
        let (_, v) = symmetric_eigen(&random_symmetric(n, 9), n).unwrap();
        for a in 0..n {
            for b in 0..n {
                let dot: f64 = (0..n).map(|k| v[k * n + a] * v[k * n + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn full_rank_pca_round_trips() {
        let mut rng = seeded_rng(3);
        let w = Tensor::<f64>::from_fn(&[50, 4], |_| rng.random_range(-2.0..2.0));
        let pca = PcaModel::fit(std::slice::from_ref(&w), 4).unwrap();
        let back = pca.inverse_transform(&pca.transform(&w).unwrap()).unwrap();
        assert!(back.max_abs_diff(&w).unwrap() < 1e-10);
        assert!(pca.eigenvalues.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn recovers_dominant_axis() {
        // points along (3, 4)/5 plus tiny orthogonal jitter
        let mut rng = seeded_rng(4);
        let w = Tensor::<f64>::from_fn(&[200, 2], |_| 0.0);
        let mut data = w.into_data();
        for i in 0..200 {
            let s: f64 = rng.random_range(-5.0..5.0);
            let e: f64 = rng.random_range(-0.01..0.01);
            data[2 * i] = 0.6 * s - 0.8 * e + 1.0;
            data[2 * i + 1] = 0.8 * s + 0.6 * e - 2.0;
        }
        let w = Tensor::new(vec![200, 2], data).unwrap();
        let pca = PcaModel::fit(&[w], 1).unwrap();
        assert!((pca.components[0][0].abs() - 0.6).abs() < 1e-3);
        assert!((pca.components[0][1].abs() - 0.8).abs() < 1e-3);
        assert!((pca.means[0] - 1.0).abs() < 0.5);
    }

    #[test]
    fn rejects_bad_dims() {
        let w = Tensor::<f32>::zeros(&[3, 2]);
        assert!(PcaModel::fit(std::slice::from_ref(&w), 3).is_err());
        assert!(PcaModel::fit::<f32>(&[], 1).is_err());
    }
}
