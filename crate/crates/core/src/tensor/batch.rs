use rayon::prelude::*;

use super::{Bound, Graph, ParamSet, Real, Var};
use crate::error::{Error, Result};

/// Evaluates `loss` for every item on its own graph (in parallel), then sums
/// the per-item parameter gradients in item order and stores
/// `scale * sum` on `params`. Returns the per-item loss values.
///
/// The reduction order is fixed, so results do not depend on thread count.
pub fn batch_gradients<F, T, L>(params: &mut ParamSet<F>, items: &[T], scale: f64, loss: L) -> Result<Vec<f64>>
where
    F: Real,
    T: Sync,
    L: Fn(&mut Graph<F>, &Bound, &T) -> Result<Var> + Sync,
{
    if items.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let shared: &ParamSet<F> = params;
    let results: Vec<Result<(f64, Vec<Vec<F>>)>> = items
        .par_iter()
        .map(|item| {
            let mut g = Graph::new();
            let b = shared.bind(&mut g);
            let root = loss(&mut g, &b, item)?;
            let value = g.scalar(root).as_f64();
            g.backward(root)?;
            let grads = b
                .vars()
                .iter()
                .map(|&v| g.grad(v).expect("bound params track gradients").to_vec())
                .collect();
            Ok((value, grads))
        })
        .collect();

    let mut losses = Vec::with_capacity(items.len());
    let mut total: Option<Vec<Vec<F>>> = None;
    for r in results {
        let (value, grads) = r?;
        losses.push(value);
        match total.as_mut() {
            None => total = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(grads) {
                    a.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
    let s = F::lit(scale);
    for (t, mut g) in params.tensors_mut().iter_mut().zip(total.expect("non-empty batch")) {
        g.iter_mut().for_each(|v| *v *= s);
        t.set_grad(g)?;
    }
    Ok(losses)
}
