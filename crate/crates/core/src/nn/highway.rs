use serde::{Deserialize, Serialize};

use super::{Dense, Prelu};
use crate::error::Result;
use crate::tensor::{Bound, Graph, ParamSet, Real, Var};
use crate::Rng;

/// Gated residual block applied per timestep:
/// `y = g * H(x) + (1 - g) * x`, `g = sigmoid(x Wg + bg)`, `H = PReLU(x Wh + bh)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Highway {
    pub dim: usize,
    pub transform: Dense,
    pub gate: Dense,
    pub act: Prelu,
}

impl Highway {
    pub fn new<F: Real>(ps: &mut ParamSet<F>, name: &str, dim: usize, rng: &mut Rng) -> Self {
        let transform = Dense::new(ps, &format!("{name}.transform"), dim, dim, rng);
        let gate = Dense::new(ps, &format!("{name}.gate"), dim, dim, rng);
        let act = Prelu::new(ps, &format!("{name}.act"));
        Self {
            dim,
            transform,
            gate,
            act,
        }
    }

    pub fn num_params(&self) -> usize {
        self.transform.num_params() + self.gate.num_params() + 1
    }

    pub fn forward<F: Real>(&self, g: &mut Graph<F>, p: &Bound, x: Var) -> Result<Var> {
        let lin = self.transform.forward(g, p, x)?;
        let h = self.act.forward(g, p, lin)?;
        let gz = self.gate.forward(g, p, x)?;
        let gate = g.sigmoid(gz);
        // x + g * (H(x) - x)
        let delta = g.sub(h, x)?;
        let gated = g.mul(gate, delta)?;
        g.add(x, gated)
    }
}
