use crate::error::Result;
use crate::tensor::{Graph, Real, Var};

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Standardises each channel of a `T x C` sequence over time:
/// `(y - mean) / sqrt(var + eps)` with population variance.
pub fn instance_norm<F: Real>(g: &mut Graph<F>, x: Var, eps: f64) -> Result<Var> {
    g.instance_norm(x, F::lit(eps))
}
