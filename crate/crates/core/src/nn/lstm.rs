use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use crate::error::Result;
use crate::tensor::{Bound, Graph, ParamId, ParamSet, Real, Tensor, Var};
use crate::Rng;

/// Single-layer LSTM returning every hidden state.
///
/// Weights: `w_x` is `D x 4H`, `w_h` is `H x 4H`, `b` is `4H`; gate blocks are
/// ordered input, forget, cell, output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lstm {
    pub input_dim: usize,
    pub hidden: usize,
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
}

impl Lstm {
    pub fn new<F: Real>(ps: &mut ParamSet<F>, name: &str, input_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let w_x = ps.add(
            format!("{name}.w_x"),
            glorot_uniform(&[input_dim, 4 * hidden], input_dim, 4 * hidden, rng),
        );
        let w_h = ps.add(
            format!("{name}.w_h"),
            glorot_uniform(&[hidden, 4 * hidden], hidden, 4 * hidden, rng),
        );
        // forget gate starts open
        let b = ps.add(
            format!("{name}.b"),
            Tensor::from_fn(&[4 * hidden], |i| {
                if (hidden..2 * hidden).contains(&i) { F::one() } else { F::zero() }
            }),
        );
        Self {
            input_dim,
            hidden,
            w_x,
            w_h,
            b,
        }
    }

    pub fn num_params(&self) -> usize {
        4 * self.hidden * (self.input_dim + self.hidden + 1)
    }

    /// `x (T x D)` to hidden states `T x H`, from zero initial state.
    pub fn forward<F: Real>(&self, g: &mut Graph<F>, p: &Bound, x: Var) -> Result<Var> {
        g.lstm(x, p.get(self.w_x), p.get(self.w_h), p.get(self.b), None, None)
    }

    /// As [`Lstm::forward`] with explicit initial hidden and cell states.
    pub fn forward_from<F: Real>(&self, g: &mut Graph<F>, p: &Bound, x: Var, h0: Var, c0: Var) -> Result<Var> {
        g.lstm(x, p.get(self.w_x), p.get(self.w_h), p.get(self.b), Some(h0), Some(c0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck;
    use crate::{seeded_rng, Error};

    #[test]
    fn zero_weights_give_zero_output() {
        let mut ps = ParamSet::<f64>::new();
        let layer = Lstm::new(&mut ps, "l", 3, 4, &mut seeded_rng(0));
        for id in ps.ids().collect::<Vec<_>>() {
            ps.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let x = g.input(Tensor::from_fn(&[6, 3], |i| i as f64));
        let h = layer.forward(&mut g, &b, x).unwrap();
        assert_eq!(g.shape(h), &[6, 4]);
        assert!(g.value(h).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recurrence_matches_scalar_reference() {
        // H = 1, D = 1: hand-rolled recurrence
        let mut ps = ParamSet::<f64>::new();
        let layer = Lstm::new(&mut ps, "l", 1, 1, &mut seeded_rng(3));
        let wx = ps.get(layer.w_x).data().to_vec();
        let wh = ps.get(layer.w_h).data().to_vec();
        let bb = ps.get(layer.b).data().to_vec();
        let xs = [0.5, -1.0, 2.0];
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (mut h, mut c) = (0.0, 0.0);
        let mut want = vec![];
        for &x in &xs {
            let z: Vec<f64> = (0..4).map(|k| wx[k] * x + wh[k] * h + bb[k]).collect();
            c = sig(z[1]) * c + sig(z[0]) * z[2].tanh();
            h = sig(z[3]) * c.tanh();
            want.push(h);
        }
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let x = g.input(Tensor::new(vec![3, 1], xs.to_vec()).unwrap());
        let out = layer.forward(&mut g, &b, x).unwrap();
        for (a, w) in g.value(out).iter().zip(&want) {
            assert!((a - w).abs() < 1e-14);
        }
    }

    #[test]
    fn input_width_mismatch() {
        let mut ps = ParamSet::<f64>::new();
        let layer = Lstm::new(&mut ps, "l", 3, 2, &mut seeded_rng(0));
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let x = g.input(Tensor::zeros(&[4, 5]));
        assert!(matches!(layer.forward(&mut g, &b, x), Err(Error::Shape(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seeded_rng(11);
        let mut ps = ParamSet::<f64>::new();
        let layer = Lstm::new(&mut ps, "l", 3, 2, &mut rng);
        let xs = ps.add("x", super::super::init::uniform(&[5, 3], 1.0, &mut rng));
        let h0 = ps.add("h0", super::super::init::uniform(&[2], 0.5, &mut rng));
        let c0 = ps.add("c0", super::super::init::uniform(&[2], 0.5, &mut rng));
        let report = gradcheck::check(&ps, 1e-5, |g, b| {
            let h = layer.forward_from(g, b, b.get(xs), b.get(h0), b.get(c0))?;
            Ok(g.sum(h))
        })
        .unwrap();
        assert!(report.passes(1e-4), "{report:?}");
        assert_eq!(layer.num_params(), 4 * 2 * (3 + 2 + 1));
    }
}
