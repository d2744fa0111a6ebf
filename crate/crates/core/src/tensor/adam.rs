use serde::{Deserialize, Serialize};

use super::{ParamSet, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every tensor of a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct AdamState<F = f32> {
    pub config: AdamConfig,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    t: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &ParamSet<F>, config: AdamConfig) -> Result<Self> {
        if !(config.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", config.lr)));
        }
        let zeros = || params.iter().map(|(_, t)| vec![F::zero(); t.len()]).collect();
        Ok(Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update using the gradients stored on `params`.
    pub fn step(&mut self, params: &mut ParamSet<F>) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Contract("optimizer state does not match parameter set".into()));
        }
        for (i, t) in params.tensors_mut().iter().enumerate() {
            if t.grad().is_none() {
                return Err(Error::Contract(format!("parameter {i} has no gradient")));
            }
            if self.m[i].len() != t.len() {
                return Err(Error::Contract(format!("parameter {i} changed size")));
            }
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (F::lit(c.beta1), F::lit(c.beta2));
        let one = F::one();
        let corr1 = F::lit(1.0 - c.beta1.powi(self.t as i32));
        let corr2 = F::lit(1.0 - c.beta2.powi(self.t as i32));
        let (lr, eps) = (F::lit(c.lr), F::lit(c.eps));
        for (i, t) in params.tensors_mut().iter_mut().enumerate() {
            let grad = t.grad().expect("checked above").to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, p) in t.data_mut().iter_mut().enumerate() {
                let g = grad[j];
                m[j] = b1 * m[j] + (one - b1) * g;
                v[j] = b2 * v[j] + (one - b2) * g * g;
                let m_hat = m[j] / corr1;
                let v_hat = v[j] / corr2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
