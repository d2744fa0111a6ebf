use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::{dropout, instance_norm, maxpool1d, split_time_attention, Conv1d, Dense, Highway, Prelu, INSTANCE_NORM_EPS};
use crate::tensor::{Bound, Checkpoint, Graph, ParamSet, Real, Tensor, Var};
use crate::{seeded_rng, Rng};

/// Layer widths of the convolutional attention classifier. Every field can be
/// overridden; [`ClassifierConfig::validate`] names any broken constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub timesteps: usize,
    pub features: usize,
    pub classes: usize,
    pub block1_filters: usize,
    pub block1_kernel: usize,
    pub block2_filters: usize,
    pub block2_out_filters: usize,
    pub block2_kernel: usize,
    /// Dropout rate in thousandths (200 = 0.2), keeping the config `Eq`.
    pub dropout_permille: u32,
    pub pool: usize,
    pub dense: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self::deap()
    }
}

impl ClassifierConfig {
    pub fn deap() -> Self {
        Self {
            timesteps: 8064,
            features: 8,
            classes: 2,
            block1_filters: 128,
            block1_kernel: 5,
            block2_filters: 256,
            block2_out_filters: 512,
            block2_kernel: 11,
            dropout_permille: 200,
            pool: 2,
            dense: 256,
        }
    }

    pub fn seed() -> Self {
        Self {
            timesteps: 30000,
            features: 16,
            ..Self::deap()
        }
    }

    pub fn dropout(&self) -> f64 {
        self.dropout_permille as f64 / 1000.0
    }

    /// Width of the concatenated block outputs (640 by default).
    pub fn concat_width(&self) -> usize {
        self.block1_filters + self.block2_out_filters
    }

    /// Time steps after both pools (`T / 4` by default).
    pub fn reduced_steps(&self) -> usize {
        self.timesteps / (self.pool * self.pool)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |what: String| Err(Error::Config(what));
        let positive = [
            ("timesteps", self.timesteps),
            ("features", self.features),
            ("block1_filters", self.block1_filters),
            ("block2_filters", self.block2_filters),
            ("block2_out_filters", self.block2_out_filters),
            ("pool", self.pool),
            ("dense", self.dense),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return fail(format!("{name} must be positive"));
        }
        if self.classes < 2 {
            return fail(format!("classes = {} but at least 2 are needed", self.classes));
        }
        if self.block1_kernel.is_multiple_of(2) || self.block2_kernel.is_multiple_of(2) {
            return fail(format!(
                "kernel widths must be odd (block1_kernel = {}, block2_kernel = {})",
                self.block1_kernel, self.block2_kernel
            ));
        }
        let div = self.pool * self.pool;
        if !self.timesteps.is_multiple_of(div) {
            return fail(format!(
                "timesteps = {} must be divisible by pool^2 = {div} (two pooling stages)",
                self.timesteps
            ));
        }
        if !self.concat_width().is_multiple_of(2) {
            return fail(format!(
                "block1_filters + block2_out_filters = {} must be even for the split attention",
                self.concat_width()
            ));
        }
        if self.dropout_permille >= 1000 {
            return fail(format!("dropout {} must be below 1", self.dropout()));
        }
        Ok(())
    }

    /// Output shape after every stage, computed without building the model.
    pub fn shape_trace(&self) -> Vec<(&'static str, Vec<usize>)> {
        let t1 = self.timesteps / self.pool;
        let t2 = self.reduced_steps();
        let f = self.concat_width();
        vec![
            ("input", vec![self.timesteps, self.features]),
            ("block1", vec![t1, self.block1_filters]),
            ("block2_conv1", vec![t1, self.block2_filters]),
            ("block2_conv2", vec![t1, self.block2_out_filters]),
            ("concat", vec![t1, f]),
            ("highway", vec![t2, f]),
            ("attention", vec![t2, f / 2]),
            ("dense", vec![t2, self.dense]),
            ("flatten", vec![t2 * self.dense]),
            ("logits", vec![self.classes]),
        ]
    }

    /// Trainable parameter count implied by the config.
    pub fn param_count(&self) -> usize {
        let conv = |k: usize, i: usize, o: usize| k * i * o + o;
        let dense = |i: usize, o: usize| i * o + o;
        let f = self.concat_width();
        conv(self.block1_kernel, self.features, self.block1_filters)
            + conv(self.block2_kernel, self.features, self.block2_filters)
            + conv(self.block2_kernel, self.block2_filters, self.block2_out_filters)
            + 2 * dense(f, f)
            + dense(f / 2, self.dense)
            + dense(self.reduced_steps() * self.dense, self.classes)
            + 4
    }
}

/// Pre- and post-attention activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationCapture {
    /// Highway output, `T' x F`.
    pub pre_attention: Tensor<f32>,
    /// Attention output, `T' x F/2`.
    pub post_attention: Tensor<f32>,
    /// Softmax weights over time, `T' x F/2`.
    pub weights: Tensor<f32>,
    /// Input steps per captured step (`T / T'`).
    pub compression: usize,
}

pub struct ForwardOutput {
    /// `1 x K` logits; softmax is applied by the loss.
    pub logits: Var,
    pub pre_attention: Var,
    pub post_attention: Var,
    pub weights: Var,
    /// Every stage's output shape, in [`ClassifierConfig::shape_trace`] order.
    pub trace: Vec<(&'static str, Vec<usize>)>,
}

#[derive(Debug, Clone)]
pub struct ClassifierModel<F = f32> {
    pub config: ClassifierConfig,
    params: ParamSet<F>,
    conv1: Conv1d,
    act1: Prelu,
    conv2a: Conv1d,
    act2a: Prelu,
    conv2b: Conv1d,
    act2b: Prelu,
    highway: Highway,
    dense: Dense,
    output: Dense,
}

impl<F: Real> ClassifierModel<F> {
    pub fn new(config: ClassifierConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut ps = ParamSet::new();
        let conv1 = Conv1d::new(&mut ps, "block1.conv", c.features, c.block1_filters, c.block1_kernel, rng)?;
        let act1 = Prelu::new(&mut ps, "block1.prelu");
        let conv2a = Conv1d::new(&mut ps, "block2.conv1", c.features, c.block2_filters, c.block2_kernel, rng)?;
        let act2a = Prelu::new(&mut ps, "block2.prelu1");
        let conv2b = Conv1d::new(&mut ps, "block2.conv2", c.block2_filters, c.block2_out_filters, c.block2_kernel, rng)?;
        let act2b = Prelu::new(&mut ps, "block2.prelu2");
        let highway = Highway::new(&mut ps, "highway", c.concat_width(), rng);
        let dense = Dense::new(&mut ps, "dense", c.concat_width() / 2, c.dense, rng);
        let output = Dense::new(&mut ps, "output", c.reduced_steps() * c.dense, c.classes, rng);
        Ok(Self {
            config,
            params: ps,
            conv1,
            act1,
            conv2a,
            act2a,
            conv2b,
            act2b,
            highway,
            dense,
            output,
        })
    }

    pub fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    pub(crate) fn take_params(&mut self) -> ParamSet<F> {
        std::mem::take(&mut self.params)
    }

    pub(crate) fn put_params(&mut self, ps: ParamSet<F>) {
        self.params = ps;
    }

    pub fn num_params(&self) -> usize {
        self.params.num_elements()
    }

    /// Conv, instance norm, PReLU, dropout.
    fn conv_unit(
        &self,
        g: &mut Graph<F>,
        p: &Bound,
        x: Var,
        conv: &Conv1d,
        act: &Prelu,
        rng: &mut Option<&mut Rng>,
    ) -> Result<Var> {
        let y = conv.forward(g, p, x)?;
        let y = instance_norm(g, y, INSTANCE_NORM_EPS)?;
        let y = act.forward(g, p, y)?;
        dropout(g, y, self.config.dropout(), rng.as_deref_mut())
    }

    /// Full forward pass. Dropout is active only when `rng` is given.
    pub fn forward(&self, g: &mut Graph<F>, p: &Bound, x: Var, mut rng: Option<&mut Rng>) -> Result<ForwardOutput> {
        let c = &self.config;
        if g.shape(x) != [c.timesteps, c.features] {
            return shape_err(format!(
                "classifier expects {}x{} input, got {:?}",
                c.timesteps,
                c.features,
                g.shape(x)
            ));
        }
        let mut trace = vec![("input", g.shape(x).to_vec())];
        let mut note = |g: &Graph<F>, name: &'static str, v: Var| trace.push((name, g.shape(v).to_vec()));

        let b1 = self.conv_unit(g, p, x, &self.conv1, &self.act1, &mut rng)?;
        let b1 = maxpool1d(g, b1, c.pool)?;
        note(g, "block1", b1);

        let b2 = self.conv_unit(g, p, x, &self.conv2a, &self.act2a, &mut rng)?;
        let b2 = maxpool1d(g, b2, c.pool)?;
        note(g, "block2_conv1", b2);
        let b2 = self.conv_unit(g, p, b2, &self.conv2b, &self.act2b, &mut rng)?;
        note(g, "block2_conv2", b2);

        let cat = g.concat(&[b1, b2], 1)?;
        note(g, "concat", cat);
        let hw = self.highway.forward(g, p, cat)?;
        let hw = maxpool1d(g, hw, c.pool)?;
        note(g, "highway", hw);

        let att = split_time_attention(g, hw)?;
        note(g, "attention", att.output);
        let d = self.dense.forward(g, p, att.output)?;
        let d = instance_norm(g, d, INSTANCE_NORM_EPS)?;
        note(g, "dense", d);
        let n = g.shape(d).iter().product();
        let flat = g.reshape(d, &[1, n])?;
        trace.push(("flatten", vec![n]));
        let logits = self.output.forward(g, p, flat)?;
        trace.push(("logits", vec![c.classes]));
        Ok(ForwardOutput {
            logits,
            pre_attention: hw,
            post_attention: att.output,
            weights: att.weights,
            trace,
        })
    }

    /// Inference-mode logits for one window, with the activation capture when
    /// `capture` is set.
    pub fn infer(&self, x: &Tensor<F>, capture: bool) -> Result<(Vec<F>, Option<ActivationCapture>)> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let xv = g.input(x.clone());
        let out = self.forward(&mut g, &p, xv, None)?;
        let logits = g.value(out.logits).to_vec();
        let cap = capture.then(|| ActivationCapture {
            pre_attention: g.tensor(out.pre_attention).cast(),
            post_attention: g.tensor(out.post_attention).cast(),
            weights: g.tensor(out.weights).cast(),
            compression: self.config.pool * self.config.pool,
        });
        Ok((logits, cap))
    }

    /// Class probabilities for one window.
    pub fn predict_proba(&self, x: &Tensor<F>) -> Result<Vec<f64>> {
        let (logits, _) = self.infer(x, false)?;
        Ok(softmax(&logits))
    }

    pub fn predict(&self, x: &Tensor<F>) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    /// Predictions for many windows, evaluated in parallel.
    pub fn predict_many(&self, xs: &[Tensor<F>]) -> Result<Vec<usize>> {
        use rayon::prelude::*;
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        self.params.to_named_f32()
    }

    pub fn from_checkpoint(config: ClassifierConfig, entries: &Checkpoint) -> Result<Self> {
        let mut model = Self::new(config, &mut seeded_rng(0))?;
        model.params.load_named(entries)?;
        Ok(model)
    }

    pub fn cast<G: Real>(&self) -> ClassifierModel<G> {
        ClassifierModel {
            config: self.config,
            params: self.params.cast(),
            conv1: self.conv1.clone(),
            act1: self.act1.clone(),
            conv2a: self.conv2a.clone(),
            act2a: self.act2a.clone(),
            conv2b: self.conv2b.clone(),
            act2b: self.act2b.clone(),
            highway: self.highway.clone(),
            dense: self.dense.clone(),
            output: self.output.clone(),
        }
    }
}

pub(crate) fn softmax<F: Real>(z: &[F]) -> Vec<f64> {
    let max = z.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v.as_f64() - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

/// First index of the maximum.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
