use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scaler::MinMaxScaler;
use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_f64s, read_model, read_u32, write_f64s, write_model};
use crate::nn::{
    build_mlp, cross_entropy_loss, sigmoid, train, Dense, EarlyStop, LabeledSample, MlpClassifier,
    Optimizer, Tensor, TrainConfig,
};

pub const ENSEMBLE_FEATURES: usize = 6;
pub const ENSEMBLE_HIDDEN: [usize; 4] = [40, 40, 20, 10];
pub const WB_HIDDEN: [usize; 2] = [64, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackerKind {
    Logistic,
    Mlp,
}

/// A membership classifier over rescaled features.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedAttacker {
    pub kind: AttackerKind,
    pub model: MlpClassifier,
    pub scaler: MinMaxScaler,
}

impl TrainedAttacker {
    pub fn feature_len(&self) -> usize {
        self.scaler.dim()
    }
}

/// Membership probability in `[0, 1]`.
pub fn attacker_score(attacker: &TrainedAttacker, features: &[f64]) -> Result<f64> {
    let scaled = attacker.scaler.transform(features)?;
    Ok(attacker.model.predict(&scaled)?[1])
}

fn check_training_set(features: &[Vec<f64>], labels: &[bool]) -> Result<()> {
    if features.len() != labels.len() {
        return Err(Error::shape(features.len(), labels.len()));
    }
    if features.len() < 2 {
        return Err(Error::Training(
            "an attacker needs at least 2 samples".into(),
        ));
    }
    let members = labels.iter().filter(|l| **l).count();
    if members == 0 || members == labels.len() {
        return Err(Error::Training(
            "attacker training data must contain members and non-members".into(),
        ));
    }
    Ok(())
}

/// Stopping rule of the logistic attacker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub max_steps: usize,
    pub relative_tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            max_steps: 10_000,
            relative_tolerance: 1e-8,
        }
    }
}

/// Logistic regression on min-max scaled features, fit by full-batch gradient
/// descent on binary cross-entropy from a zero start.
pub fn fit_logistic_attacker(features: &[Vec<f64>], labels: &[bool]) -> Result<TrainedAttacker> {
    fit_logistic_attacker_with(features, labels, &LogisticConfig::default())
}

pub fn fit_logistic_attacker_with(
    features: &[Vec<f64>],
    labels: &[bool],
    config: &LogisticConfig,
) -> Result<TrainedAttacker> {
    check_training_set(features, labels)?;
    let scaler = MinMaxScaler::fit(features)?;
    let xs = scaler.transform_all(features)?;
    let d = scaler.dim();
    let n = xs.len() as f64;
    let targets: Vec<f64> = labels.iter().map(|l| if *l { 1.0 } else { 0.0 }).collect();

    // 1/L with L = trace bound on the Hessian of the mean log-loss.
    let mean_sq: f64 = xs
        .iter()
        .map(|x| 1.0 + x.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / n;
    let lr = 4.0 / mean_sq;

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut prev_loss = f64::INFINITY;
    let mut grad_w = vec![0.0; d];
    for _ in 0..config.max_steps {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        let mut loss = 0.0;
        for (x, t) in xs.iter().zip(&targets) {
            let z = b + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
            let p = sigmoid(z);
            loss += cross_entropy_loss(&[1.0 - p, p], *t as usize)?;
            let r = p - t;
            grad_b += r;
            for (g, xi) in grad_w.iter_mut().zip(x) {
                *g += r * xi;
            }
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::Training("logistic attacker diverged".into()));
        }
        if prev_loss.is_finite()
            && (prev_loss - loss).abs() <= config.relative_tolerance * prev_loss.abs()
        {
            break;
        }
        prev_loss = loss;
        for (wi, g) in w.iter_mut().zip(&grad_w) {
            *wi -= lr * g / n;
        }
        b -= lr * grad_b / n;
    }

    let model = MlpClassifier::from_layers(vec![Dense {
        weight: Tensor::new(vec![1, d], w)?,
        bias: Tensor::new(vec![1], vec![b])?,
    }])?;
    Ok(TrainedAttacker {
        kind: AttackerKind::Logistic,
        model,
        scaler,
    })
}

/// Optimisation settings shared by the neural attackers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerTrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for AttackerTrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 300,
            batch_size: 32,
            learning_rate: 1e-3,
            patience: 20,
            min_delta: 1e-6,
            seed: 0,
        }
    }
}

/// Sigmoid-output MLP `[d, hidden.., 1]` trained with Adam on binary
/// cross-entropy over min-max scaled features.
pub fn fit_mlp_attacker(
    features: &[Vec<f64>],
    labels: &[bool],
    hidden: &[usize],
    config: &AttackerTrainConfig,
) -> Result<TrainedAttacker> {
    check_training_set(features, labels)?;
    let scaler = MinMaxScaler::fit(features)?;
    let samples: Vec<LabeledSample> = scaler
        .transform_all(features)?
        .into_iter()
        .zip(labels)
        .map(|(x, l)| LabeledSample::new(x, *l as usize))
        .collect();
    let mut dims = vec![scaler.dim()];
    dims.extend_from_slice(hidden);
    dims.push(1);
    let mut model = build_mlp(&dims, config.seed)?;
    let train_cfg = TrainConfig {
        epochs: config.max_epochs,
        batch_size: config.batch_size,
        learning_rate: config.learning_rate,
        optimizer: Optimizer::Adam,
        seed: config.seed.wrapping_add(1),
        early_stop: Some(EarlyStop {
            patience: config.patience,
            min_delta: config.min_delta,
        }),
        ..TrainConfig::default()
    };
    train(&mut model, &samples, &train_cfg)?;
    Ok(TrainedAttacker {
        kind: AttackerKind::Mlp,
        model,
        scaler,
    })
}

/// Six-score ensemble attacker with body `[6, 40, 40, 20, 10, 1]`.
pub fn build_and_train_ensemble(
    features6: &[Vec<f64>],
    labels: &[bool],
    seed: u64,
    config: &AttackerTrainConfig,
) -> Result<TrainedAttacker> {
    if let Some(bad) = features6.iter().find(|f| f.len() != ENSEMBLE_FEATURES) {
        return Err(Error::Config(format!(
            "ensemble attacker expects {ENSEMBLE_FEATURES} features, got {}",
            bad.len()
        )));
    }
    let cfg = AttackerTrainConfig {
        seed,
        ..config.clone()
    };
    fit_mlp_attacker(features6, labels, &ENSEMBLE_HIDDEN, &cfg)
}

const SCALER_MAGIC: &[u8; 8] = b"ADVMIASC";
const SCALER_VERSION: u32 = 1;

/// Model checkpoint followed by a scaler block
/// (`"ADVMIASC"`, u32 version, u8 kind, u32 dim, mins, maxs).
pub fn write_attacker(w: &mut impl Write, attacker: &TrainedAttacker) -> Result<()> {
    write_model(w, &attacker.model)?;
    w.write_all(SCALER_MAGIC)?;
    w.write_all(&SCALER_VERSION.to_le_bytes())?;
    w.write_all(&[match attacker.kind {
        AttackerKind::Logistic => 0u8,
        AttackerKind::Mlp => 1u8,
    }])?;
    w.write_all(&(attacker.scaler.dim() as u32).to_le_bytes())?;
    write_f64s(w, &attacker.scaler.mins)?;
    write_f64s(w, &attacker.scaler.maxs)?;
    Ok(())
}

pub fn read_attacker(r: &mut impl Read) -> Result<TrainedAttacker> {
    let model = read_model(r)?;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Checkpoint(format!("missing scaler block: {e}")))?;
    if &magic != SCALER_MAGIC {
        return Err(Error::Checkpoint("bad scaler block magic".into()));
    }
    if read_u32(r)? != SCALER_VERSION {
        return Err(Error::Checkpoint("unsupported scaler block version".into()));
    }
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    let kind = match kind[0] {
        0 => AttackerKind::Logistic,
        1 => AttackerKind::Mlp,
        other => return Err(Error::Checkpoint(format!("unknown attacker kind {other}"))),
    };
    let dim = read_u32(r)? as usize;
    if dim != model.input_dim() {
        return Err(Error::Checkpoint(
            "scaler and model dimensions disagree".into(),
        ));
    }
    let mins = read_f64s(r, dim)?;
    let maxs = read_f64s(r, dim)?;
    Ok(TrainedAttacker {
        kind,
        model,
        scaler: MinMaxScaler { mins, maxs },
    })
}

pub fn save_attacker(path: &Path, attacker: &TrainedAttacker) -> Result<()> {
    let mut buf = Vec::new();
    write_attacker(&mut buf, attacker)?;
    crate::runner::export::write_atomic(path, &buf)
}

pub fn load_attacker(path: &Path) -> Result<TrainedAttacker> {
    let bytes = std::fs::read(path)?;
    read_attacker(&mut bytes.as_slice())
}
