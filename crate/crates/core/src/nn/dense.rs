use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use crate::error::Result;
use crate::tensor::{Bound, Graph, ParamId, ParamSet, Real, Tensor, Var};
use crate::Rng;

/// Affine map applied to each row: `T x in` to `T x out`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn new<F: Real>(ps: &mut ParamSet<F>, name: &str, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let weight = ps.add(format!("{name}.w"), glorot_uniform(&[in_dim, out_dim], in_dim, out_dim, rng));
        let bias = ps.add(format!("{name}.b"), Tensor::zeros(&[out_dim]));
        Self {
            in_dim,
            out_dim,
            weight,
            bias,
        }
    }

    pub fn num_params(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }

    pub fn forward<F: Real>(&self, g: &mut Graph<F>, p: &Bound, x: Var) -> Result<Var> {
        let y = g.matmul(x, p.get(self.weight))?;
        g.add(y, p.get(self.bias))
    }
}
