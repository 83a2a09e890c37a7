use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{LabeledSample, MlpClassifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// Stop once the epoch loss has not improved by `min_delta` for `patience` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub patience: usize,
    pub min_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub early_stop: Option<EarlyStop>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            early_stop: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let rates = [
            ("learning_rate", self.learning_rate),
            ("adam_epsilon", self.adam_epsilon),
        ];
        for (name, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

/// Mean training loss of every completed epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epoch_losses: Vec<f64>,
}

struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: i32,
}

fn check_dataset(model: &MlpClassifier, data: &[LabeledSample]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let k = model.num_classes();
    for s in data {
        if s.features.len() != model.input_dim() {
            return Err(Error::shape(model.input_dim(), s.features.len()));
        }
        if s.label >= k {
            return Err(Error::Index {
                index: s.label,
                len: k,
            });
        }
    }
    Ok(())
}

/// Mini-batch training on the mean cross-entropy; batch order is a seeded
/// permutation drawn afresh every epoch.
pub fn train(
    model: &mut MlpClassifier,
    data: &[LabeledSample],
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    check_dataset(model, data)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut adam = AdamState {
        first: model
            .layers()
            .iter()
            .flat_map(|l| [l.weight.numel(), l.bias.numel()])
            .map(|n| vec![0.0; n])
            .collect(),
        second: Vec::new(),
        step: 0,
    };
    adam.second = adam.first.clone();

    let mut history = TrainHistory::default();
    let mut best = f64::INFINITY;
    let mut stale = 0usize;

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            for layer in model.layers_mut() {
                layer.weight.zero_grad();
                layer.bias.zero_grad();
            }
            let scale = 1.0 / batch.len() as f64;
            let mut grads = Vec::with_capacity(batch.len());
            for &i in batch {
                let s = &data[i];
                grads.push(model.backward_gradients(&s.features, s.label)?);
            }
            for g in &grads {
                epoch_loss += g.loss;
                for (layer, (wg, bg)) in model
                    .layers_mut()
                    .iter_mut()
                    .zip(g.weights.iter().zip(&g.biases))
                {
                    layer.weight.accumulate_grad(wg.values(), scale)?;
                    layer.bias.accumulate_grad(bg.values(), scale)?;
                }
            }
            apply_update(model, config, &mut adam);
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Training("training loss diverged".into()));
        }
        history.epoch_losses.push(mean);

        if let Some(stop) = config.early_stop {
            if mean < best - stop.min_delta {
                best = mean;
                stale = 0;
            } else {
                stale += 1;
                if stale >= stop.patience {
                    break;
                }
            }
        }
    }
    Ok(history)
}

fn apply_update(model: &mut MlpClassifier, config: &TrainConfig, adam: &mut AdamState) {
    adam.step += 1;
    let lr = config.learning_rate;
    let (b1, b2) = (config.beta1, config.beta2);
    let correction1 = 1.0 - b1.powi(adam.step);
    let correction2 = 1.0 - b2.powi(adam.step);
    let tensors = model
        .layers_mut()
        .iter_mut()
        .flat_map(|l| [&mut l.weight, &mut l.bias]);
    for (idx, t) in tensors.enumerate() {
        let grad = t.take_grad().unwrap_or_default();
        let values = t.values_mut();
        match config.optimizer {
            Optimizer::Sgd => {
                for (v, g) in values.iter_mut().zip(&grad) {
                    *v -= lr * g;
                }
            }
            Optimizer::Adam => {
                let m = &mut adam.first[idx];
                let s = &mut adam.second[idx];
                for i in 0..values.len() {
                    let g = grad[i];
                    m[i] = b1 * m[i] + (1.0 - b1) * g;
                    s[i] = b2 * s[i] + (1.0 - b2) * g * g;
                    let m_hat = m[i] / correction1;
                    let s_hat = s[i] / correction2;
                    values[i] -= lr * m_hat / (s_hat.sqrt() + config.adam_epsilon);
                }
            }
        }
    }
}
