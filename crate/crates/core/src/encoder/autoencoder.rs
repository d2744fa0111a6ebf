use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::awgn::add_awgn;
use crate::error::{shape_err, Error, Result};
use crate::nn::{Attention, Lstm};
use crate::tensor::{batch_gradients, AdamConfig, AdamState, Bound, Checkpoint, Graph, ParamSet, Real, Tensor, Var};
use crate::{derive_seed, seeded_rng, Rng};

/// Shape of the autoencoder: `timesteps x channels` in, `timesteps x latent_dims` latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub channels: usize,
    pub latent_dims: usize,
    pub timesteps: usize,
    /// Per-timestep attention score bias. Ties the model to `timesteps`.
    #[serde(default = "default_true")]
    pub time_bias: bool,
}

fn default_true() -> bool {
    true
}

impl AutoencoderConfig {
    pub fn new(channels: usize, latent_dims: usize, timesteps: usize) -> Self {
        Self {
            channels,
            latent_dims,
            timesteps,
            time_bias: true,
        }
    }

    /// 32 channels, 63 s at 128 Hz, 8 latent dimensions.
    pub fn deap() -> Self {
        Self::new(32, 8, 8064)
    }

    /// 62 channels, 150 s at 200 Hz, 16 latent dimensions.
    pub fn seed() -> Self {
        Self::new(62, 16, 30000)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.latent_dims == 0 || self.timesteps == 0 {
            return Err(Error::Config(format!("autoencoder dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Encoder LSTM (`C -> L`), channel attention over the `L` latent features,
/// decoder LSTM (`L -> C`). The decoder reads the attended latent sequence
/// step for step.
#[derive(Debug, Clone)]
pub struct AutoencoderModel<F = f32> {
    pub config: AutoencoderConfig,
    params: ParamSet<F>,
    encoder: Lstm,
    attention: Attention,
    decoder: Lstm,
}

impl<F: Real> AutoencoderModel<F> {
    pub fn new(config: AutoencoderConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let encoder = Lstm::new(&mut params, "encoder", config.channels, config.latent_dims, rng);
        let steps = config.time_bias.then_some(config.timesteps);
        let attention = Attention::new(&mut params, "attention", config.latent_dims, steps, rng);
        let decoder = Lstm::new(&mut params, "decoder", config.latent_dims, config.channels, rng);
        Ok(Self {
            config,
            params,
            encoder,
            attention,
            decoder,
        })
    }

    pub fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_elements()
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let c = &self.config;
        let ok = match shape {
            &[t, ch] => ch == c.channels && (!c.time_bias || t == c.timesteps),
            _ => false,
        };
        if !ok {
            return shape_err(format!(
                "autoencoder expects {}x{} input, got {shape:?}",
                c.timesteps, c.channels
            ));
        }
        Ok(())
    }

    /// Returns `(latent T x L, reconstruction T x C)`.
    pub fn forward(&self, g: &mut Graph<F>, p: &Bound, x: Var) -> Result<(Var, Var)> {
        self.check_input(g.shape(x))?;
        let hidden = self.encoder.forward(g, p, x)?;
        let latent = self.attention.channel(g, p, hidden)?.output;
        let recon = self.decoder.forward(g, p, latent)?;
        Ok((latent, recon))
    }

    /// Latent sequence for one window, without gradient tracking.
    pub fn encode(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(self.run(x)?.0)
    }

    /// `(latent, reconstruction)` for one window, without gradient tracking.
    pub fn run(&self, x: &Tensor<F>) -> Result<(Tensor<F>, Tensor<F>)> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let xv = g.input(x.clone());
        let (latent, recon) = self.forward(&mut g, &p, xv)?;
        Ok((g.tensor(latent), g.tensor(recon)))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        self.params.to_named_f32()
    }

    pub fn from_checkpoint(config: AutoencoderConfig, entries: &Checkpoint) -> Result<Self> {
        let mut model = Self::new(config, &mut seeded_rng(0))?;
        model.params.load_named(entries)?;
        Ok(model)
    }

    pub fn cast<G: Real>(&self) -> AutoencoderModel<G> {
        AutoencoderModel {
            config: self.config,
            params: self.params.cast(),
            encoder: self.encoder.clone(),
            attention: self.attention.clone(),
            decoder: self.decoder.clone(),
        }
    }
}

/// Mean squared error between a clean window and its reconstruction.
pub fn reconstruction_loss<F: Real>(clean: &Tensor<F>, recon: &Tensor<F>) -> Result<F> {
    if clean.shape() != recon.shape() {
        return shape_err(format!("loss of {:?} against {:?}", clean.shape(), recon.shape()));
    }
    let n = F::lit(clean.len() as f64);
    Ok(clean
        .data()
        .iter()
        .zip(recon.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<F>()
        / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoencoderTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Corrupt inputs with unit-SNR white noise (fresh draw per epoch).
    pub denoise: bool,
}

impl Default for AutoencoderTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
            denoise: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean training loss per epoch, each batch measured before its update.
    pub epoch_losses: Vec<f64>,
}

/// Fits an autoencoder to reconstruct clean windows from noisy copies.
/// Labels are never consulted.
pub fn train_autoencoder<F: Real>(
    windows: &[Tensor<F>],
    config: AutoencoderConfig,
    train: &AutoencoderTrainConfig,
) -> Result<(AutoencoderModel<F>, TrainHistory)> {
    if windows.is_empty() {
        return Err(Error::Config("autoencoder training needs at least one window".into()));
    }
    if train.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut model = AutoencoderModel::new(config, &mut seeded_rng(derive_seed(train.seed, 0)))?;
    for w in windows {
        model.check_input(w.shape())?;
    }
    let mut rng = seeded_rng(derive_seed(train.seed, 1));
    let mut adam = AdamState::new(&model.params, train.adam)?;
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..windows.len()).collect();

    for epoch in 0..train.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(train.batch_size) {
            let pairs: Vec<(&Tensor<F>, Tensor<F>)> = batch
                .iter()
                .map(|&i| {
                    let clean = &windows[i];
                    let input = if train.denoise { add_awgn(clean, &mut rng)? } else { clean.clone() };
                    Ok((clean, input))
                })
                .collect::<Result<_>>()?;
            let mut params = std::mem::take(&mut model.params);
            let net = &model;
            let losses = batch_gradients(&mut params, &pairs, 1.0 / pairs.len() as f64, |g, p, (clean, input)| {
                let x = g.input(input.clone());
                let target = g.input((*clean).clone());
                let (_, recon) = net.forward(g, p, x)?;
                g.mse(recon, target)
            });
            model.params = params;
            total += losses?.iter().sum::<f64>();
            adam.step(&mut model.params)?;
            model.params.clear_grads();
        }
        let mean = total / windows.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Validation(format!("autoencoder loss diverged at epoch {epoch}")));
        }
        log::debug!("autoencoder epoch {epoch}: loss {mean:.6}");
        history.epoch_losses.push(mean);
    }
    Ok((model, history))
}
