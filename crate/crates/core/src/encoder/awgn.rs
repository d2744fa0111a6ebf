use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::tensor::{Real, Tensor};
use crate::Rng;

/// Adds white Gaussian noise to each channel of a `T x C` window with
/// variance equal to that channel's mean power, i.e. SNR = 1 (0 dB).
/// Silent channels stay untouched.
pub fn add_awgn<F: Real>(x: &Tensor<F>, rng: &mut Rng) -> Result<Tensor<F>> {
    let (t, c) = x.dims2()?;
    let mut power = vec![0.0f64; c];
    for row in x.data().chunks(c) {
        for (p, &v) in power.iter_mut().zip(row) {
            *p += v.as_f64() * v.as_f64();
        }
    }
    let std: Vec<f64> = power.iter().map(|p| (p / t as f64).sqrt()).collect();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(c) {
        for (v, &s) in row.iter_mut().zip(&std) {
            let n = unit.sample(rng);
            if s > 0.0 {
                *v += F::lit(n * s);
            }
        }
    }
    Ok(out)
}
