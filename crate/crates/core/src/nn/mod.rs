//! Layers built on the autodiff graph.
//!
//! Each parameterised layer is a small struct of [`ParamId`](crate::tensor::ParamId)s
//! into a model's [`ParamSet`](crate::tensor::ParamSet); `forward` takes the graph
//! and the bound parameter handles. All sequence layers expect `T x features`.

mod activation;
mod attention;
mod conv;
mod dense;
mod dropout;
mod highway;
pub mod init;
mod lstm;
mod norm;

pub use activation::{Prelu, PRELU_INIT};
pub use attention::{attention_context, channel_attention, split_time_attention, Attention, AttentionOutput};
pub use conv::Conv1d;
pub use dense::Dense;
pub use dropout::dropout;
pub use highway::Highway;
pub use lstm::Lstm;
pub use norm::{instance_norm, INSTANCE_NORM_EPS};

use crate::error::Result;
use crate::tensor::{Graph, Real, Var};

/// Non-overlapping max pooling along time.
pub fn maxpool1d<F: Real>(g: &mut Graph<F>, x: Var, pool: usize) -> Result<Var> {
    g.maxpool1d(x, pool)
}
