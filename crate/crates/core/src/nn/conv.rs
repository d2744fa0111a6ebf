use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use crate::error::{Error, Result};
use crate::tensor::{Bound, Graph, ParamId, ParamSet, Real, Tensor, Var};
use crate::Rng;

/// 1-D convolution over time: same zero padding, stride 1, odd kernel width.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv1d {
    pub fn new<F: Real>(
        ps: &mut ParamSet<F>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel width {kernel} must be odd for same padding")));
        }
        let weight = ps.add(
            format!("{name}.w"),
            glorot_uniform(
                &[kernel, in_channels, out_channels],
                kernel * in_channels,
                kernel * out_channels,
                rng,
            ),
        );
        let bias = ps.add(format!("{name}.b"), Tensor::zeros(&[out_channels]));
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            weight,
            bias,
        })
    }

    pub fn num_params(&self) -> usize {
        self.kernel * self.in_channels * self.out_channels + self.out_channels
    }

    /// `T x Cin` to `T x Cout`.
    pub fn forward<F: Real>(&self, g: &mut Graph<F>, p: &Bound, x: Var) -> Result<Var> {
        g.conv1d(x, p.get(self.weight), p.get(self.bias))
    }
}
