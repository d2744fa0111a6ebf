//! Central finite-difference gradient checking in `f64`.

use super::{Bound, Graph, ParamSet, Var};
use crate::error::Result;

/// Gradients smaller than this are compared absolutely.
pub const MAGNITUDE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares the analytic gradient of the scalar built by `f` against central
/// differences with step `h`, for every element of every tensor in `params`.
pub fn check<Fun>(params: &ParamSet<f64>, h: f64, f: Fun) -> Result<GradCheckReport>
where
    Fun: Fn(&mut Graph<f64>, &Bound) -> Result<Var>,
{
    let eval = |ps: &ParamSet<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let b = ps.bind_frozen(&mut g);
        let out = f(&mut g, &b)?;
        Ok(g.scalar(out))
    };

    let mut g = Graph::new();
    let b = params.bind(&mut g);
    let root = f(&mut g, &b)?;
    g.backward(root)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    let mut probe = params.clone();
    for id in params.ids() {
        let analytic = g.grad(b.get(id)).expect("bound params track gradients").to_vec();
        for (i, &a) in analytic.iter().enumerate() {
            let orig = params.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error || !rel.is_finite() {
                report.max_rel_error = if rel.is_finite() { rel } else { f64::INFINITY };
                report.worst_param = params.name(id).to_string();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
