use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::projection::{project_lp_box, BoxBounds, Norm};
use crate::error::{Error, Result};
use crate::nn::{argmax, MlpClassifier, Tensor};

/// Iteration fractions at which the step size is reconsidered.
pub const CHECKPOINT_FRACTIONS: [f64; 9] = [0.22, 0.42, 0.57, 0.69, 0.78, 0.85, 0.90, 0.94, 0.97];

/// Minimum fraction of improving steps between checkpoints that keeps the step size.
pub const IMPROVEMENT_RATIO: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub norm: Norm,
    pub epsilon: f64,
    pub n_iter: usize,
    /// Extra runs started from random points of the feasible set.
    pub n_restarts: usize,
    pub seed: u64,
    /// Initial step size as a multiple of `epsilon`.
    pub initial_step_fraction: f64,
    /// Weight of the fresh step against the previous displacement.
    pub momentum: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            norm: Norm::Linf,
            epsilon: 1.0,
            n_iter: 100,
            n_restarts: 0,
            seed: 0,
            initial_step_fraction: 2.0,
            momentum: 0.75,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "attack epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.n_iter == 0 {
            return Err(Error::Config("attack n_iter must be at least 1".into()));
        }
        if !(self.initial_step_fraction > 0.0 && self.initial_step_fraction.is_finite()) {
            return Err(Error::Config(
                "initial_step_fraction must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }

    /// Iteration indices (1-based, within `1..=n_iter`) of the step-size checkpoints.
    pub fn checkpoints(&self) -> Vec<usize> {
        let mut out: Vec<usize> = CHECKPOINT_FRACTIONS
            .iter()
            .map(|f| (f * self.n_iter as f64).ceil() as usize)
            .filter(|w| *w >= 1 && *w <= self.n_iter)
            .collect();
        out.dedup();
        out
    }
}

/// One feasible iterate of the ascent.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub iteration: usize,
    pub point: Vec<f64>,
    pub loss: f64,
    /// Largest loss seen up to and including this iterate.
    pub best_loss: f64,
    pub predicted_class: usize,
    /// ‖point − x‖_p with `x` the attacked input.
    pub distance: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttackTrace {
    pub steps: Vec<TraceStep>,
}

impl AttackTrace {
    pub fn max_loss(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.loss)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV dump with columns `iteration,loss,distance,predicted_class`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "iteration,loss,distance,predicted_class")?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{},{},{}",
                s.iteration, s.loss, s.distance, s.predicted_class
            )?;
        }
        Ok(())
    }
}

fn step_direction(norm: Norm, grad: &[f64]) -> Vec<f64> {
    match norm {
        Norm::Linf => grad
            .iter()
            .map(|g| {
                if *g > 0.0 {
                    1.0
                } else if *g < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect(),
        Norm::L1 | Norm::L2 => {
            let len = Norm::L2.of(grad);
            if len > 0.0 && len.is_finite() {
                grad.iter().map(|g| g / len).collect()
            } else {
                vec![0.0; grad.len()]
            }
        }
    }
}

struct Evaluated {
    loss: f64,
    class: usize,
    grad: Vec<f64>,
}

fn evaluate(model: &MlpClassifier, point: &[f64], y: usize) -> Result<Evaluated> {
    let (loss, probs, grad) = model.input_gradient(point, y)?;
    Ok(Evaluated {
        loss,
        class: argmax(&probs),
        grad,
    })
}

fn check_sample(model: &MlpClassifier, x: &[f64], y: usize) -> Result<()> {
    if x.len() != model.input_dim() {
        return Err(Error::shape(model.input_dim(), x.len()));
    }
    if !BoxBounds::UNIT.contains(x) {
        return Err(Error::InvalidInput(
            "attacked input must lie in [0, 1]^d".into(),
        ));
    }
    if y >= model.num_classes() {
        return Err(Error::Index {
            index: y,
            len: model.num_classes(),
        });
    }
    Ok(())
}

/// Adaptive-step projected gradient ascent on `loss(y, g(·))` started at `x`.
///
/// The returned trace holds `x` followed by `n_iter` feasible iterates.
pub fn apgd_maximize_loss(
    model: &MlpClassifier,
    x: &[f64],
    y: usize,
    config: &AttackConfig,
) -> Result<AttackTrace> {
    apgd_from(model, x, y, x, config)
}

/// Same as [`apgd_maximize_loss`] but started at a feasible `start` point.
pub fn apgd_from(
    model: &MlpClassifier,
    x: &[f64],
    y: usize,
    start: &[f64],
    config: &AttackConfig,
) -> Result<AttackTrace> {
    config.validate()?;
    check_sample(model, x, y)?;
    let norm = config.norm;
    let eps = config.epsilon;
    let alpha = config.momentum;
    let project = |p: &[f64]| project_lp_box(p, x, norm, eps, BoxBounds::UNIT);

    let start = project(start)?;
    let mut eta = config.initial_step_fraction * eps;
    let mut trace = AttackTrace::default();
    let record =
        |trace: &mut AttackTrace, it: usize, point: &[f64], e: &Evaluated, best: f64, eta: f64| {
            trace.steps.push(TraceStep {
                iteration: it,
                point: point.to_vec(),
                loss: e.loss,
                best_loss: best,
                predicted_class: e.class,
                distance: norm.distance(point, x),
                step_size: eta,
            });
        };

    let first = evaluate(model, &start, y)?;
    let mut best_point = start.clone();
    let mut best_grad = first.grad.clone();
    let mut best_loss = first.loss;
    record(&mut trace, 0, &start, &first, best_loss, eta);

    let checkpoints = config.checkpoints();
    let mut next_checkpoint = 0usize;
    let mut last_checkpoint = 0usize;
    let mut improved_since = 0usize;
    let mut best_at_last_checkpoint = best_loss;
    let mut reduced_at_last_checkpoint = false;

    let mut prev = start.clone();
    let mut current = start;
    let mut current_loss = first.loss;
    let mut current_grad = first.grad;

    for k in 1..=config.n_iter {
        let dir = step_direction(norm, &current_grad);
        let z = project(
            &current
                .iter()
                .zip(&dir)
                .map(|(c, d)| c + eta * d)
                .collect::<Vec<_>>(),
        )?;
        let next = if k == 1 {
            z
        } else {
            let blended: Vec<f64> = current
                .iter()
                .zip(&z)
                .zip(&prev)
                .map(|((c, zi), p)| c + alpha * (zi - c) + (1.0 - alpha) * (c - p))
                .collect();
            project(&blended)?
        };
        let e = evaluate(model, &next, y)?;
        if e.loss > current_loss {
            improved_since += 1;
        }
        if e.loss > best_loss {
            best_loss = e.loss;
            best_point = next.clone();
            best_grad = e.grad.clone();
        }
        record(&mut trace, k, &next, &e, best_loss, eta);

        prev = std::mem::replace(&mut current, next);
        current_loss = e.loss;
        current_grad = e.grad;

        if next_checkpoint < checkpoints.len() && k == checkpoints[next_checkpoint] {
            let span = (k - last_checkpoint) as f64;
            let too_few_improvements = (improved_since as f64) < IMPROVEMENT_RATIO * span;
            let stalled = !reduced_at_last_checkpoint && best_loss <= best_at_last_checkpoint;
            reduced_at_last_checkpoint = too_few_improvements || stalled;
            if reduced_at_last_checkpoint {
                eta /= 2.0;
                current = best_point.clone();
                prev = best_point.clone();
                current_loss = best_loss;
                current_grad = best_grad.clone();
            }
            best_at_last_checkpoint = best_loss;
            improved_since = 0;
            last_checkpoint = k;
            next_checkpoint += 1;
        }
    }
    Ok(trace)
}

/// Result of searching for an adversarial example.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialOutcome {
    pub v: Tensor,
    /// ‖v‖_p when `success`, otherwise `epsilon`.
    pub distance: f64,
    pub success: bool,
    pub iterations_used: usize,
    pub best_loss: f64,
}

/// Random feasible starting point around `x`.
fn random_start(rng: &mut ChaCha8Rng, x: &[f64], norm: Norm, eps: f64) -> Result<Vec<f64>> {
    let d = x.len();
    let delta: Vec<f64> = match norm {
        Norm::Linf => (0..d).map(|_| rng.random_range(-eps..=eps)).collect(),
        Norm::L2 => {
            let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let len = Norm::L2.of(&g).max(f64::MIN_POSITIVE);
            let radius = eps * rng.random::<f64>().powf(1.0 / d as f64);
            g.iter().map(|v| v * radius / len).collect()
        }
        Norm::L1 => {
            let e: Vec<f64> = (0..=d).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = e.iter().sum();
            e[1..]
                .iter()
                .map(|v| {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    sign * eps * v / total
                })
                .collect()
        }
    };
    let candidate: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
    project_lp_box(&candidate, x, norm, eps, BoxBounds::UNIT)
}

struct Candidate {
    point: Vec<f64>,
    distance: f64,
}

struct RunSummary {
    smallest_success: Option<Candidate>,
    best_loss: f64,
    best_loss_point: Vec<f64>,
    iterations: usize,
}

fn run_attack(
    model: &MlpClassifier,
    x: &[f64],
    y: usize,
    config: &AttackConfig,
) -> Result<RunSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut starts = vec![x.to_vec()];
    for _ in 0..config.n_restarts {
        starts.push(random_start(&mut rng, x, config.norm, config.epsilon)?);
    }
    let mut summary = RunSummary {
        smallest_success: None,
        best_loss: f64::NEG_INFINITY,
        best_loss_point: x.to_vec(),
        iterations: 0,
    };
    for start in &starts {
        let trace = apgd_from(model, x, y, start, config)?;
        summary.iterations += config.n_iter;
        for step in trace.steps {
            if step.loss > summary.best_loss {
                summary.best_loss = step.loss;
                summary.best_loss_point = step.point.clone();
            }
            if step.predicted_class != y
                && summary
                    .smallest_success
                    .as_ref()
                    .is_none_or(|c| step.distance < c.distance)
            {
                summary.smallest_success = Some(Candidate {
                    distance: step.distance,
                    point: step.point,
                });
            }
        }
    }
    Ok(summary)
}

fn outcome_from(
    x: &[f64],
    success: Option<&Candidate>,
    failure_point: &[f64],
    epsilon: f64,
    iterations: usize,
    best_loss: f64,
) -> AdversarialOutcome {
    let delta = |p: &[f64]| -> Vec<f64> { p.iter().zip(x).map(|(a, b)| a - b).collect() };
    match success {
        Some(c) => AdversarialOutcome {
            v: Tensor::from_slice(&delta(&c.point)),
            distance: c.distance,
            success: true,
            iterations_used: iterations,
            best_loss,
        },
        None => AdversarialOutcome {
            v: Tensor::from_slice(&delta(failure_point)),
            distance: epsilon,
            success: false,
            iterations_used: iterations,
            best_loss,
        },
    }
}

/// Smallest-norm misclassifying perturbation found by the ascent.
///
/// Success means the predicted class differs from the true label `y`.
/// Inputs already misclassified return `v = 0`. When nothing misclassifies,
/// the outcome reports failure with distance `epsilon`.
pub fn find_adversarial(
    model: &MlpClassifier,
    x: &[f64],
    y: usize,
    config: &AttackConfig,
) -> Result<AdversarialOutcome> {
    Ok(find_adversarial_budgets(model, x, y, config, &[config.epsilon])?.remove(0))
}

/// Runs the attack for each budget in ascending order; the outcome at a budget
/// also considers every iterate found under the smaller budgets, so the
/// reported distance never grows with the budget.
pub fn find_adversarial_budgets(
    model: &MlpClassifier,
    x: &[f64],
    y: usize,
    config: &AttackConfig,
    epsilons: &[f64],
) -> Result<Vec<AdversarialOutcome>> {
    config.validate()?;
    check_sample(model, x, y)?;
    if epsilons.is_empty() {
        return Err(Error::Config("at least one budget is required".into()));
    }
    if epsilons.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("budgets must be ascending".into()));
    }
    let e0 = evaluate(model, x, y)?;
    if e0.class != y {
        return Ok(epsilons
            .iter()
            .map(|_| AdversarialOutcome {
                v: Tensor::from_slice(&vec![0.0; x.len()]),
                distance: 0.0,
                success: true,
                iterations_used: 0,
                best_loss: e0.loss,
            })
            .collect());
    }

    let mut outcomes = Vec::with_capacity(epsilons.len());
    let mut carried: Option<Candidate> = None;
    let mut iterations = 0;
    for &eps in epsilons {
        let cfg = AttackConfig {
            epsilon: eps,
            ..config.clone()
        };
        let run = run_attack(model, x, y, &cfg)?;
        iterations += run.iterations;
        if let Some(c) = run.smallest_success {
            if carried
                .as_ref()
                .is_none_or(|prev| c.distance < prev.distance)
            {
                carried = Some(c);
            }
        }
        outcomes.push(outcome_from(
            x,
            carried.as_ref(),
            &run.best_loss_point,
            eps,
            iterations,
            run.best_loss,
        ));
    }
    Ok(outcomes)
}
