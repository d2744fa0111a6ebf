use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{ClassifierConfig, ClassifierModel};
use crate::error::{Error, Result};
use crate::tensor::{batch_gradients, AdamConfig, AdamState, Real, Tensor};
use crate::{derive_seed, seeded_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    /// Stop after this many epochs without a lower training loss. 0 disables.
    pub patience: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            patience: 10,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHistory {
    /// Mean cross-entropy per epoch (dropout active).
    pub epoch_losses: Vec<f64>,
    /// Fraction of training windows whose pre-update prediction was correct.
    pub epoch_accuracy: Vec<f64>,
    pub stopped_early: bool,
}

/// Trains on `(latent window, class)` pairs with softmax cross-entropy.
pub fn train_classifier<F: Real>(
    data: &[(Tensor<F>, usize)],
    config: ClassifierConfig,
    train: &ClassifierTrainConfig,
) -> Result<(ClassifierModel<F>, ClassifierHistory)> {
    if train.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let first = data.first().map(|d| d.1);
    if first.is_none() || data.iter().all(|d| Some(d.1) == first) {
        return Err(Error::Config("classifier training needs at least two classes".into()));
    }
    if let Some(bad) = data.iter().find(|d| d.1 >= config.classes) {
        return Err(Error::Config(format!("label {} with {} classes", bad.1, config.classes)));
    }
    let mut model = ClassifierModel::new(config, &mut seeded_rng(derive_seed(train.seed, 0)))?;
    let mut adam = AdamState::new(model.params(), train.adam)?;
    let mut order_rng = seeded_rng(derive_seed(train.seed, 1));
    let dropout_stream = derive_seed(train.seed, 2);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = ClassifierHistory::default();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut step = 0u64;

    for epoch in 0..train.epochs {
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(train.batch_size) {
            let items: Vec<(usize, u64)> = batch
                .iter()
                .enumerate()
                .map(|(j, &i)| (i, derive_seed(dropout_stream, step * train.batch_size as u64 + j as u64)))
                .collect();
            let mut params = model.take_params();
            let net = &model;
            let hits = std::sync::atomic::AtomicUsize::new(0);
            let losses = batch_gradients(&mut params, &items, 1.0 / items.len() as f64, |g, p, &(i, seed)| {
                let (x, y) = &data[i];
                let xv = g.input(x.clone());
                let mut rng = seeded_rng(seed);
                let out = net.forward(g, p, xv, Some(&mut rng))?;
                let z: Vec<f64> = g.value(out.logits).iter().map(|v| v.as_f64()).collect();
                if super::model::argmax(&z) == *y {
                    hits.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                }
                g.cross_entropy(out.logits, *y)
            });
            model.put_params(params);
            loss_sum += losses?.iter().sum::<f64>();
            correct += hits.into_inner();
            adam.step(model.params_mut())?;
            model.params_mut().clear_grads();
            step += 1;
        }
        let loss = loss_sum / data.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Validation(format!("classifier loss diverged at epoch {epoch}")));
        }
        history.epoch_losses.push(loss);
        history.epoch_accuracy.push(correct as f64 / data.len() as f64);
        log::debug!("classifier epoch {epoch}: loss {loss:.5} acc {:.3}", correct as f64 / data.len() as f64);
        if loss < best {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if train.patience > 0 && stale >= train.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    Ok((model, history))
}
