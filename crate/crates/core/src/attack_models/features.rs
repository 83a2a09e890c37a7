use serde::{Deserialize, Serialize};

use super::stats::gradient_statistics;
use crate::adversarial::AttackConfig;
use crate::error::{Error, Result};
use crate::nn::MlpClassifier;
use crate::scores::{score_sample, Strategy};

/// Which extractor produced a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    GradWStats,
    GradXStats,
    IntermediateOutputs,
    WbConcat,
    SixScores,
}

impl FeatureKind {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureKind::GradWStats => "grad_w_stats",
            FeatureKind::GradXStats => "grad_x_stats",
            FeatureKind::IntermediateOutputs => "intermediate_outputs",
            FeatureKind::WbConcat => "wb_concat",
            FeatureKind::SixScores => "six_scores",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Seven statistics of the parameter gradient (all layers, flattened).
pub fn extract_grad_w_stats(model: &MlpClassifier, x: &[f64], y: usize) -> Result<FeatureVector> {
    let g = model.backward_gradients(x, y)?;
    Ok(FeatureVector {
        kind: FeatureKind::GradWStats,
        values: gradient_statistics(&g.flattened_parameters())?.to_vec(),
    })
}

/// Seven statistics of the input gradient.
pub fn extract_grad_x_stats(model: &MlpClassifier, x: &[f64], y: usize) -> Result<FeatureVector> {
    let (_, _, dx) = model.input_gradient(x, y)?;
    Ok(FeatureVector {
        kind: FeatureKind::GradXStats,
        values: gradient_statistics(&dx)?.to_vec(),
    })
}

fn intermediate_values(
    model: &MlpClassifier,
    x: &[f64],
    include_penultimate: bool,
) -> Result<(Vec<f64>, crate::nn::ForwardTrace)> {
    if model.layers().len() < 2 {
        return Err(Error::Config(
            "intermediate outputs need a model with at least one hidden layer".into(),
        ));
    }
    let trace = model.forward_trace(x)?;
    let mut values = trace.probs.clone();
    if include_penultimate {
        values.extend_from_slice(trace.penultimate().unwrap_or_default());
    }
    Ok((values, trace))
}

/// Output probabilities followed by the last hidden layer's activations.
pub fn extract_intermediate_outputs(model: &MlpClassifier, x: &[f64]) -> Result<FeatureVector> {
    Ok(FeatureVector {
        kind: FeatureKind::IntermediateOutputs,
        values: intermediate_values(model, x, true)?.0,
    })
}

/// Output probabilities only (the penultimate block disabled).
pub fn extract_output_probabilities(model: &MlpClassifier, x: &[f64]) -> Result<FeatureVector> {
    Ok(FeatureVector {
        kind: FeatureKind::IntermediateOutputs,
        values: intermediate_values(model, x, false)?.0,
    })
}

/// `[final-layer parameter gradient, loss, intermediate outputs, onehot(y)]`.
pub fn extract_wb_features(model: &MlpClassifier, x: &[f64], y: usize) -> Result<FeatureVector> {
    let (intermediate, _) = intermediate_values(model, x, true)?;
    let g = model.backward_gradients(x, y)?;
    let last = g.weights.len() - 1;
    let mut values = g.weights[last].values().to_vec();
    values.extend_from_slice(g.biases[last].values());
    values.push(g.loss);
    values.extend(intermediate);
    let k = model.num_classes();
    values.extend((0..k).map(|i| if i == y { 1.0 } else { 0.0 }));
    Ok(FeatureVector {
        kind: FeatureKind::WbConcat,
        values,
    })
}

/// The six threshold scores in the order softmax, mentr, loss, grad_w_norm,
/// grad_x_norm, adv_dist.
pub fn extract_six_scores(
    model: &MlpClassifier,
    x: &[f64],
    y: usize,
    attack: &AttackConfig,
) -> Result<FeatureVector> {
    Ok(FeatureVector {
        kind: FeatureKind::SixScores,
        values: score_sample(model, x, y, &Strategy::ALL, attack)?,
    })
}
