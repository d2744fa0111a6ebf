//! Softmax attention variants.
//!
//! * [`attention_context`]: one score per timestep (`h_t . W`), softmax over
//!   time, weighted sum of hidden states. Removes the time axis.
//! * [`channel_attention`]: elementwise scores `h_t * W`, softmax over the
//!   features of each timestep, rescaled hidden states. Keeps the time axis.
//! * [`split_time_attention`]: the first half of the features are scores,
//!   softmaxed over time per column, gating the second half. Keeps time.

use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use crate::error::{shape_err, Result};
use crate::tensor::{Bound, Graph, ParamId, ParamSet, Real, Tensor, Var};
use crate::Rng;

/// Attention weights: a vector `W` over the feature dimension, plus an
/// optional per-timestep score bias (as in the common Keras attention layer).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Attention {
    pub dim: usize,
    pub steps: Option<usize>,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

/// Output together with the normalised attention weights that produced it.
#[derive(Debug, Clone, Copy)]
pub struct AttentionOutput {
    pub output: Var,
    pub weights: Var,
}

impl Attention {
    /// `steps = Some(T)` adds a length-`T` bias; `None` makes the layer
    /// independent of sequence length.
    pub fn new<F: Real>(ps: &mut ParamSet<F>, name: &str, dim: usize, steps: Option<usize>, rng: &mut Rng) -> Self {
        let weight = ps.add(format!("{name}.w"), glorot_uniform(&[dim], dim, 1, rng));
        let bias = steps.map(|t| ps.add(format!("{name}.b"), Tensor::zeros(&[t])));
        Self {
            dim,
            steps,
            weight,
            bias,
        }
    }

    pub fn num_params(&self) -> usize {
        self.dim + self.steps.unwrap_or(0)
    }

    pub fn context<F: Real>(&self, g: &mut Graph<F>, p: &Bound, h: Var) -> Result<AttentionOutput> {
        attention_context(g, h, p.get(self.weight), self.bias.map(|b| p.get(b)))
    }

    pub fn channel<F: Real>(&self, g: &mut Graph<F>, p: &Bound, h: Var) -> Result<AttentionOutput> {
        channel_attention(g, h, p.get(self.weight), self.bias.map(|b| p.get(b)))
    }
}

fn check_inputs<F: Real>(g: &Graph<F>, h: Var, w: Var, bias: Option<Var>) -> Result<(usize, usize)> {
    let (t, d) = match g.shape(h) {
        &[t, d] => (t, d),
        s => return shape_err(format!("attention expects T x D hidden states, got {s:?}")),
    };
    if g.shape(w) != [d] {
        return shape_err(format!("attention weight must be [{d}], got {:?}", g.shape(w)));
    }
    if let Some(b) = bias {
        if g.shape(b) != [t] {
            return shape_err(format!("attention bias must be [{t}], got {:?}", g.shape(b)));
        }
    }
    Ok((t, d))
}

/// Context vector `C = sum_t softmax_t(h_t . W + b_t) h_t`, shape `[D]`.
pub fn attention_context<F: Real>(g: &mut Graph<F>, h: Var, w: Var, bias: Option<Var>) -> Result<AttentionOutput> {
    let (t, d) = check_inputs(g, h, w, bias)?;
    let wcol = g.reshape(w, &[d, 1])?;
    let mut scores = g.matmul(h, wcol)?;
    if let Some(b) = bias {
        let bcol = g.reshape(b, &[t, 1])?;
        scores = g.add(scores, bcol)?;
    }
    let alpha = g.softmax(scores, 0)?;
    let alpha_row = g.transpose(alpha)?;
    let ctx = g.matmul(alpha_row, h)?;
    let output = g.reshape(ctx, &[d])?;
    Ok(AttentionOutput { output, weights: alpha })
}

/// Per-timestep feature reweighting: `out_t = softmax_d(h_t * W + b_t) * h_t`.
/// The bias is constant along the softmax axis and therefore cancels.
pub fn channel_attention<F: Real>(g: &mut Graph<F>, h: Var, w: Var, bias: Option<Var>) -> Result<AttentionOutput> {
    let (t, _) = check_inputs(g, h, w, bias)?;
    let mut scores = g.mul(h, w)?;
    if let Some(b) = bias {
        let bcol = g.reshape(b, &[t, 1])?;
        scores = g.add(scores, bcol)?;
    }
    let alpha = g.softmax(scores, 1)?;
    let output = g.mul(alpha, h)?;
    Ok(AttentionOutput { output, weights: alpha })
}

/// Splits `T x 2F` into scores (first half) and values (second half);
/// returns `values * softmax_time(scores)`, shape `T x F`.
pub fn split_time_attention<F: Real>(g: &mut Graph<F>, h: Var) -> Result<AttentionOutput> {
    let (_, f2) = match g.shape(h) {
        &[t, f] => (t, f),
        s => return shape_err(format!("expected T x 2F features, got {s:?}")),
    };
    if f2 % 2 != 0 {
        return shape_err(format!("feature dimension {f2} must be even"));
    }
    let half = f2 / 2;
    let scores = g.slice(h, 1, 0, half)?;
    let values = g.slice(h, 1, half, half)?;
    let a = g.softmax(scores, 0)?;
    let output = g.mul(values, a)?;
    Ok(AttentionOutput { output, weights: a })
}
