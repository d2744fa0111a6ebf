use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{Bound, Graph, ParamId, ParamSet, Real, Tensor, Var};

/// Initial negative-side slope.
pub const PRELU_INIT: f64 = 0.25;

/// Parametric ReLU with one learnable slope per layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prelu {
    pub eta: ParamId,
}

impl Prelu {
    pub fn new<F: Real>(ps: &mut ParamSet<F>, name: &str) -> Self {
        Self {
            eta: ps.add(format!("{name}.eta"), Tensor::scalar(F::lit(PRELU_INIT))),
        }
    }

    pub fn forward<F: Real>(&self, g: &mut Graph<F>, p: &Bound, x: Var) -> Result<Var> {
        g.prelu(x, p.get(self.eta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck;

    #[test]
    fn both_branches() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::new(vec![2], vec![2.0, -1.0]).unwrap());
        let eta = g.param(Tensor::scalar(0.25));
        let y = g.prelu(x, eta).unwrap();
        assert_eq!(g.value(y), &[2.0, -0.25]);
    }

    #[test]
    fn slope_gradient_is_sum_of_negative_inputs() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::new(vec![4], vec![-1.5, 2.0, -0.5, 0.0]).unwrap());
        let eta = g.param(Tensor::scalar(0.25));
        let y = g.prelu(x, eta).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(eta).unwrap(), &[-2.0]);

        let mut ps = ParamSet::<f64>::new();
        let layer = Prelu::new(&mut ps, "act");
        let xs = ps.add("x", Tensor::new(vec![4], vec![-1.5, 2.0, -0.5, 0.7]).unwrap());
        let report = gradcheck::check(&ps, 1e-5, |g, b| {
            let y = layer.forward(g, b, b.get(xs))?;
            let y2 = g.mul(y, y)?;
            Ok(g.sum(y2))
        })
        .unwrap();
        assert!(report.passes(1e-4), "{report:?}");
    }
}
