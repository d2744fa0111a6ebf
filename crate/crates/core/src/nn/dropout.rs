use rand::Rng as _;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Real, Var};
use crate::Rng;

/// Inverted dropout. With `rng = None` (inference) or `p = 0` it is the
/// identity; otherwise each element is zeroed with probability `p` and
/// survivors are scaled by `1 / (1 - p)`.
pub fn dropout<F: Real>(g: &mut Graph<F>, x: Var, p: f64, rng: Option<&mut Rng>) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {p}")));
    }
    let Some(rng) = rng else { return Ok(x) };
    if p == 0.0 {
        return Ok(x);
    }
    let keep = F::lit(1.0 / (1.0 - p));
    let n = g.value(x).len();
    let mask = (0..n)
        .map(|_| if rng.random::<f64>() < p { F::zero() } else { keep })
        .collect();
    g.mask(x, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use crate::tensor::Tensor;

    #[test]
    fn identity_cases() {
        let mut g = Graph::<f32>::new();
        let x = g.input(Tensor::from_fn(&[10], |i| i as f32));
        assert_eq!(dropout(&mut g, x, 0.0, Some(&mut seeded_rng(0))).unwrap(), x);
        assert_eq!(dropout(&mut g, x, 0.9, None).unwrap(), x);
        assert!(dropout(&mut g, x, 1.0, None).is_err());
        assert!(dropout(&mut g, x, -0.1, None).is_err());
    }

    #[test]
    fn survivor_fraction_and_mean() {
        let n = 1_000_000;
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::full(&[n], 1.0));
        let y = dropout(&mut g, x, 0.2, Some(&mut seeded_rng(42))).unwrap();
        let v = g.value(y);
        let survivors = v.iter().filter(|&&e| e != 0.0).count() as f64 / n as f64;
        let mean = v.iter().sum::<f64>() / n as f64;
        assert!((survivors - 0.8).abs() < 0.005, "{survivors}");
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }
}
