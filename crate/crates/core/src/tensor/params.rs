use super::graph::{Graph, Var};
use super::{Real, Tensor};
use crate::error::{shape_err, Error, Result};

/// Index of a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct ParamId(usize);

/// Ordered, named collection of trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<F = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<F>>,
}

/// Graph handles for every tensor of a [`ParamSet`], in the same order.
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn get(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl<F: Real> Default for ParamSet<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamSet<F> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    /// Registers a tensor. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<F>) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_elements(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.tensors
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Adds every tensor to `g` as a trainable leaf.
    pub fn bind(&self, g: &mut Graph<F>) -> Bound {
        Bound(self.tensors.iter().map(|t| g.param(t.clone())).collect())
    }

    /// Adds every tensor to `g` as a constant (inference without gradients).
    pub fn bind_frozen(&self, g: &mut Graph<F>) -> Bound {
        Bound(self.tensors.iter().map(|t| g.input(t.clone())).collect())
    }

    /// Copies gradients from `g` onto the tensors, replacing old ones.
    pub fn collect_grads(&mut self, g: &Graph<F>, bound: &Bound) -> Result<()> {
        for (t, &v) in self.tensors.iter_mut().zip(&bound.0) {
            let grad = g
                .grad(v)
                .ok_or_else(|| Error::Contract("parameter has no gradient; run backward first".into()))?;
            t.set_grad(grad.to_vec())?;
        }
        Ok(())
    }

    /// Adds gradients from `g` to any already stored (batch accumulation).
    pub fn accumulate_grads(&mut self, g: &Graph<F>, bound: &Bound) -> Result<()> {
        for (t, &v) in self.tensors.iter_mut().zip(&bound.0) {
            let grad = g
                .grad(v)
                .ok_or_else(|| Error::Contract("parameter has no gradient; run backward first".into()))?;
            let merged = match t.grad() {
                Some(old) => old.iter().zip(grad).map(|(&a, &b)| a + b).collect(),
                None => grad.to_vec(),
            };
            t.set_grad(merged)?;
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::clear_grad);
    }

    pub fn cast<G: Real>(&self) -> ParamSet<G> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Overwrites values from `(name, tensor)` pairs; names and shapes must
    /// match this set exactly.
    pub fn load_named(&mut self, entries: &[(String, Tensor<f32>)]) -> Result<()> {
        if entries.len() != self.tensors.len() {
            return shape_err(format!(
                "checkpoint holds {} tensors, model expects {}",
                entries.len(),
                self.tensors.len()
            ));
        }
        for (name, t) in entries {
            let id = self
                .find(name)
                .ok_or_else(|| Error::Shape(format!("unexpected tensor `{name}` in checkpoint")))?;
            if self.tensors[id.0].shape() != t.shape() {
                return shape_err(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    t.shape(),
                    self.tensors[id.0].shape()
                ));
            }
            self.tensors[id.0] = t.cast();
        }
        Ok(())
    }

    pub fn to_named_f32(&self) -> Vec<(String, Tensor<f32>)> {
        self.names
            .iter()
            .cloned()
            .zip(self.tensors.iter().map(Tensor::cast))
            .collect()
    }
}
