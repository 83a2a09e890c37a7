use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Lower clamp applied to probabilities inside every logarithm.
pub const PROB_CLAMP: f64 = 1e-12;

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::InvalidInput("softmax input is not finite".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-log(clamp(p_label, PROB_CLAMP, 1))`.
pub fn cross_entropy_loss(probs: &[f64], label: usize) -> Result<f64> {
    let p = *probs.get(label).ok_or(Error::Index {
        index: label,
        len: probs.len(),
    })?;
    Ok(-p.clamp(PROB_CLAMP, 1.0).ln())
}

/// Index of the largest component; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

/// How the final layer's outputs become a probability vector.
///
/// A network whose last dimension is 1 is a binary classifier with a sigmoid
/// output; its probability vector is `(1 - s, s)` over classes `{0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputHead {
    Softmax,
    Sigmoid,
}

/// One fully-connected layer; `weight` has shape `[out, in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        let n_in = self.in_dim();
        let w = self.weight.values();
        out.clear();
        out.extend(self.bias.values().iter().enumerate().map(|(o, b)| {
            let row = &w[o * n_in..(o + 1) * n_in];
            b + row.iter().zip(input).map(|(wi, xi)| wi * xi).sum::<f64>()
        }));
    }
}

/// Activations recorded during a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[i]` is the rectified
    /// output of hidden layer `i`.
    pub activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardTrace {
    /// Output of the last hidden layer (after the rectifier).
    pub fn penultimate(&self) -> Option<&[f64]> {
        if self.activations.len() >= 2 {
            self.activations.last().map(Vec::as_slice)
        } else {
            None
        }
    }
}

/// Gradients of the per-sample loss with respect to every parameter and the input.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
    pub input: Tensor,
    pub loss: f64,
    pub probs: Vec<f64>,
}

impl GradientBundle {
    /// `||grad_theta||_2^2` over all layers.
    pub fn parameter_norm_squared(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .map(Tensor::l2_norm_squared)
            .sum()
    }

    pub fn input_norm(&self) -> f64 {
        self.input.l2_norm_squared().sqrt()
    }

    /// Parameter gradient flattened layer by layer (weights then bias).
    pub fn flattened_parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.values());
            out.extend_from_slice(b.values());
        }
        out
    }
}

/// Fully-connected classifier with rectified hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpClassifier {
    layer_dims: Vec<usize>,
    layers: Vec<Dense>,
}

impl MlpClassifier {
    /// All-zero network with the given dimensions.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        validate_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| Dense {
                weight: Tensor::zeros(vec![w[1], w[0]]).with_requires_grad(true),
                bias: Tensor::zeros(vec![w[1]]).with_requires_grad(true),
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        let mut dims = vec![layers[0].in_dim()];
        for layer in &layers {
            if layer.in_dim() != *dims.last().unwrap() || layer.bias.numel() != layer.out_dim() {
                return Err(Error::shape(
                    format!("layer input {}", dims.last().unwrap()),
                    format!("{:?}", layer.weight.shape()),
                ));
            }
            dims.push(layer.out_dim());
        }
        let layers = layers
            .into_iter()
            .map(|l| Dense {
                weight: l.weight.with_requires_grad(true),
                bias: l.bias.with_requires_grad(true),
            })
            .collect();
        Ok(Self {
            layer_dims: dims,
            layers,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn head(&self) -> OutputHead {
        if *self.layer_dims.last().unwrap() == 1 {
            OutputHead::Sigmoid
        } else {
            OutputHead::Softmax
        }
    }

    /// Number of classes in the probability vector.
    pub fn num_classes(&self) -> usize {
        (*self.layer_dims.last().unwrap()).max(2)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.numel() + l.bias.numel())
            .sum()
    }

    /// All parameters, layer by layer (weights then bias).
    pub fn parameters_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.values());
            out.extend_from_slice(layer.bias.values());
        }
        out
    }

    pub fn set_parameters_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::shape(self.parameter_count(), params.len()));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for t in [&mut layer.weight, &mut layer.bias] {
                let n = t.numel();
                t.values_mut().copy_from_slice(&params[offset..offset + n]);
                offset += n;
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(
                format!("input of dimension {}", self.input_dim()),
                x.len(),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("input is not finite".into()));
        }
        Ok(())
    }

    fn head_probs(&self, logits: &[f64]) -> Result<Vec<f64>> {
        match self.head() {
            OutputHead::Softmax => softmax(logits),
            OutputHead::Sigmoid => {
                let z = logits[0];
                if !z.is_finite() {
                    return Err(Error::InvalidInput("logit is not finite".into()));
                }
                Ok(vec![sigmoid(-z), sigmoid(z)])
            }
        }
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        let mut buf = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(activations.last().unwrap(), &mut buf);
            if i == last {
                break;
            }
            activations.push(buf.iter().map(|v| v.max(0.0)).collect());
        }
        let probs = self.head_probs(&buf)?;
        Ok(ForwardTrace {
            activations,
            logits: buf,
            probs,
        })
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.logits)
    }

    /// Probability vector over the classes.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.probs)
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict(x)?))
    }

    pub fn loss(&self, x: &[f64], y: usize) -> Result<f64> {
        cross_entropy_loss(&self.predict(x)?, y)
    }

    /// d loss / d logits for the clamped cross-entropy.
    fn logit_gradient(&self, probs: &[f64], y: usize) -> Result<Vec<f64>> {
        if y >= self.num_classes() {
            return Err(Error::Index {
                index: y,
                len: self.num_classes(),
            });
        }
        // Clamp active: the loss is locally constant.
        if probs[y] < PROB_CLAMP {
            return Ok(vec![0.0; *self.layer_dims.last().unwrap()]);
        }
        Ok(match self.head() {
            OutputHead::Softmax => probs
                .iter()
                .enumerate()
                .map(|(i, p)| if i == y { p - 1.0 } else { *p })
                .collect(),
            OutputHead::Sigmoid => vec![probs[1] - y as f64],
        })
    }

    /// Reverse pass from an upstream logit gradient.
    ///
    /// Returns per-layer `(weight_grad, bias_grad)` when `with_params` is set,
    /// and always the input gradient.
    pub fn backward_from_logits(
        &self,
        trace: &ForwardTrace,
        logit_grad: &[f64],
        with_params: bool,
    ) -> (Vec<(Vec<f64>, Vec<f64>)>, Vec<f64>) {
        let mut param_grads = Vec::new();
        let mut delta = logit_grad.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.activations[i];
            let n_in = layer.in_dim();
            if with_params {
                let mut wg = vec![0.0; layer.weight.numel()];
                for (o, d) in delta.iter().enumerate() {
                    if *d != 0.0 {
                        for (g, a) in wg[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                            *g = d * a;
                        }
                    }
                }
                param_grads.push((wg, delta.clone()));
            }
            let w = layer.weight.values();
            let mut upstream = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    for (u, wi) in upstream.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *u += d * wi;
                    }
                }
            }
            if i > 0 {
                for (u, a) in upstream.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *u = 0.0;
                    }
                }
            }
            delta = upstream;
        }
        param_grads.reverse();
        (param_grads, delta)
    }

    /// Exact gradients of `loss(y, g(x))` with respect to all parameters and `x`.
    pub fn backward_gradients(&self, x: &[f64], y: usize) -> Result<GradientBundle> {
        let trace = self.forward_trace(x)?;
        let dlogits = self.logit_gradient(&trace.probs, y)?;
        let loss = cross_entropy_loss(&trace.probs, y)?;
        let (params, dx) = self.backward_from_logits(&trace, &dlogits, true);
        let mut weights = Vec::with_capacity(params.len());
        let mut biases = Vec::with_capacity(params.len());
        for (layer, (wg, bg)) in self.layers.iter().zip(params) {
            weights.push(Tensor::new(layer.weight.shape().to_vec(), wg)?);
            biases.push(Tensor::new(layer.bias.shape().to_vec(), bg)?);
        }
        Ok(GradientBundle {
            weights,
            biases,
            input: Tensor::from_slice(&dx),
            loss,
            probs: trace.probs,
        })
    }

    /// Loss, probabilities and input gradient only (skips parameter gradients).
    pub fn input_gradient(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let trace = self.forward_trace(x)?;
        let dlogits = self.logit_gradient(&trace.probs, y)?;
        let loss = cross_entropy_loss(&trace.probs, y)?;
        let (_, dx) = self.backward_from_logits(&trace, &dlogits, false);
        Ok((loss, trace.probs, dx))
    }

    pub fn accuracy(&self, data: &[LabeledSample]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Config("accuracy of an empty dataset".into()));
        }
        let mut correct = 0usize;
        for s in data {
            if self.predict_class(&s.features)? == s.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::Config(format!(
            "a network needs at least 2 layer dimensions, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::Config(format!(
            "layer dimensions must be positive, got {layer_dims:?}"
        )));
    }
    Ok(())
}

/// Free-function form of [`MlpClassifier::predict`].
pub fn forward_predict(model: &MlpClassifier, x: &[f64]) -> Result<Vec<f64>> {
    model.predict(x)
}

/// Free-function form of [`MlpClassifier::backward_gradients`].
pub fn backward_gradients(model: &MlpClassifier, x: &[f64], y: usize) -> Result<GradientBundle> {
    model.backward_gradients(x, y)
}

/// Builds a network with weights and biases drawn from
/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, fully determined by `seed`.
pub fn build_mlp(layer_dims: &[usize], seed: u64) -> Result<MlpClassifier> {
    let mut model = MlpClassifier::zeros(layer_dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut model.layers {
        let bound = 1.0 / (layer.in_dim() as f64).sqrt();
        for v in layer
            .weight
            .values_mut()
            .iter_mut()
            .chain(layer.bias.values_mut().iter_mut())
        {
            *v = rng.random_range(-bound..bound);
        }
    }
    Ok(model)
}

/// Mean cross-entropy over a dataset.
pub fn empirical_risk(model: &MlpClassifier, data: &[LabeledSample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("empirical risk of an empty dataset".into()));
    }
    let mut total = 0.0;
    for s in data {
        total += model.loss(&s.features, s.label)?;
    }
    Ok(total / data.len() as f64)
}
