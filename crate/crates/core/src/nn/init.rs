use rand::Rng as _;

use crate::tensor::{Real, Tensor};
use crate::Rng;

/// Glorot/Xavier uniform: `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<F: Real>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor<F> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| F::lit(rng.random_range(-limit..limit)))
}

pub fn uniform<F: Real>(shape: &[usize], limit: f64, rng: &mut Rng) -> Tensor<F> {
    Tensor::from_fn(shape, |_| F::lit(rng.random_range(-limit..limit)))
}
