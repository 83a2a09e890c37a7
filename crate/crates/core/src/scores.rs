//! Threshold membership scores. Every score is oriented so that a larger
//! value means "more likely a training member", and membership is decided by
//! `score >= tau`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::adversarial::{find_adversarial, AttackConfig};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy_loss, MlpClassifier, PROB_CLAMP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "softmax")]
    SoftmaxResponse,
    #[serde(rename = "mentr")]
    ModifiedEntropy,
    #[serde(rename = "loss")]
    Loss,
    #[serde(rename = "grad_w_norm")]
    GradWNorm,
    #[serde(rename = "grad_x_norm")]
    GradXNorm,
    #[serde(rename = "adv_dist")]
    AdvDist,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::SoftmaxResponse,
        Strategy::ModifiedEntropy,
        Strategy::Loss,
        Strategy::GradWNorm,
        Strategy::GradXNorm,
        Strategy::AdvDist,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::SoftmaxResponse => "softmax",
            Strategy::ModifiedEntropy => "mentr",
            Strategy::Loss => "loss",
            Strategy::GradWNorm => "grad_w_norm",
            Strategy::GradXNorm => "grad_x_norm",
            Strategy::AdvDist => "adv_dist",
        }
    }

    pub fn from_name(name: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One sample's score under one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: u64,
    pub strategy: String,
    pub score: f64,
    pub is_member: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionThreshold {
    pub tau: f64,
}

impl DecisionThreshold {
    pub fn decide(&self, score: f64) -> bool {
        membership_decision(score, self.tau)
    }
}

/// `score >= tau` ⇒ member.
pub fn membership_decision(score: f64, tau: f64) -> bool {
    score >= tau
}

/// Largest predicted class probability.
pub fn softmax_response(model: &MlpClassifier, x: &[f64]) -> Result<f64> {
    Ok(max_probability(&model.predict(x)?))
}

fn max_probability(probs: &[f64]) -> f64 {
    probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Negated modified entropy of a probability vector.
pub fn modified_entropy_from_probs(probs: &[f64], y: usize) -> Result<f64> {
    if y >= probs.len() {
        return Err(Error::Index {
            index: y,
            len: probs.len(),
        });
    }
    let log_clamped = |p: f64| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln();
    let mut entropy = -(1.0 - probs[y]) * log_clamped(probs[y]);
    for (i, p) in probs.iter().enumerate() {
        if i != y {
            entropy -= p * log_clamped(1.0 - p);
        }
    }
    Ok(-entropy)
}

pub fn modified_entropy_score(model: &MlpClassifier, x: &[f64], y: usize) -> Result<f64> {
    modified_entropy_from_probs(&model.predict(x)?, y)
}

/// Negated cross-entropy loss.
pub fn loss_score(model: &MlpClassifier, x: &[f64], y: usize) -> Result<f64> {
    Ok(-cross_entropy_loss(&model.predict(x)?, y)?)
}

/// Negated squared ℓ2 norm of the loss gradient with respect to the parameters.
pub fn grad_param_norm_score(model: &MlpClassifier, x: &[f64], y: usize) -> Result<f64> {
    Ok(-model.backward_gradients(x, y)?.parameter_norm_squared())
}

/// Negated ℓ2 norm of the loss gradient with respect to the input.
pub fn grad_input_norm_score(model: &MlpClassifier, x: &[f64], y: usize) -> Result<f64> {
    let (_, _, dx) = model.input_gradient(x, y)?;
    Ok(-dx.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// ‖v‖_p of the smallest misclassifying perturbation found (or `epsilon`).
pub fn adversarial_distance_score(
    model: &MlpClassifier,
    x: &[f64],
    y: usize,
    attack: &AttackConfig,
) -> Result<f64> {
    Ok(find_adversarial(model, x, y, attack)?.distance)
}

/// All requested scores for one sample, sharing a single forward/backward pass.
pub fn score_sample(
    model: &MlpClassifier,
    x: &[f64],
    y: usize,
    strategies: &[Strategy],
    attack: &AttackConfig,
) -> Result<Vec<f64>> {
    let grads = model.backward_gradients(x, y)?;
    strategies
        .iter()
        .map(|s| match s {
            Strategy::SoftmaxResponse => Ok(max_probability(&grads.probs)),
            Strategy::ModifiedEntropy => modified_entropy_from_probs(&grads.probs, y),
            Strategy::Loss => Ok(-grads.loss),
            Strategy::GradWNorm => Ok(-grads.parameter_norm_squared()),
            Strategy::GradXNorm => Ok(-grads.input_norm()),
            Strategy::AdvDist => adversarial_distance_score(model, x, y, attack),
        })
        .collect()
}

/// Writes records as CSV with columns `sample_id,strategy,score,is_member`.
pub fn write_score_csv(records: &[ScoreRecord], w: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer
        .write_record(["sample_id", "strategy", "score", "is_member"])
        .map_err(csv_error)?;
    for r in records {
        writer
            .write_record([
                r.sample_id.to_string(),
                r.strategy.clone(),
                r.score.to_string(),
                r.is_member.to_string(),
            ])
            .map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_score_csv(r: impl Read) -> Result<Vec<ScoreRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let parse_err = |what: &str| Error::Parse {
            line,
            message: format!("invalid {what}"),
        };
        if row.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 columns, found {}", row.len()),
            });
        }
        out.push(ScoreRecord {
            sample_id: row[0].trim().parse().map_err(|_| parse_err("sample_id"))?,
            strategy: row[1].trim().to_string(),
            score: row[2]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err("score"))?,
            is_member: row[3].trim().parse().map_err(|_| parse_err("is_member"))?,
        });
    }
    Ok(out)
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_mlp, Dense, Tensor};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Single-layer network whose softmax output at x = 0 is exactly `probs`.
    fn model_with_output(probs: &[f64]) -> MlpClassifier {
        let k = probs.len();
        MlpClassifier::from_layers(vec![Dense {
            weight: Tensor::zeros(vec![k, 2]),
            bias: Tensor::new(vec![k], probs.iter().map(|p| p.ln()).collect()).unwrap(),
        }])
        .unwrap()
    }

    #[test]
    fn softmax_response_examples() {
        let m = model_with_output(&[0.5, 0.3, 0.2]);
        assert!(close(
            softmax_response(&m, &[0.0, 0.0]).unwrap(),
            0.5,
            1e-12
        ));
        let uniform = MlpClassifier::zeros(&[2, 4]).unwrap();
        assert_eq!(softmax_response(&uniform, &[0.3, 0.1]).unwrap(), 0.25);
    }

    #[test]
    fn modified_entropy_examples() {
        assert_eq!(
            modified_entropy_from_probs(&[0.0, 1.0, 0.0], 1).unwrap(),
            0.0
        );
        let expected =
            -(0.3 * (1.0f64 / 0.7).ln() + 0.2 * (1.0f64 / 0.8).ln() + 0.1 * (1.0f64 / 0.9).ln());
        let got = modified_entropy_from_probs(&[0.7, 0.2, 0.1], 0).unwrap();
        assert!(close(got, expected, 1e-15));
        assert!(close(got, -0.16217, 1e-4));
        assert!(modified_entropy_from_probs(&[0.0, 1.0], 0).unwrap() <= -25.0);
        assert!(matches!(
            modified_entropy_from_probs(&[0.5, 0.5], 3),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn loss_score_examples() {
        let m = model_with_output(&[0.7, 0.2, 0.1]);
        assert!(close(
            loss_score(&m, &[0.0, 0.0], 0).unwrap(),
            -0.356675,
            1e-6
        ));
        let uniform = MlpClassifier::zeros(&[2, 5]).unwrap();
        assert!(close(
            loss_score(&uniform, &[0.2, 0.2], 1).unwrap(),
            -(5f64.ln()),
            1e-12
        ));
    }

    #[test]
    fn grad_param_norm_closed_form_for_single_layer() {
        let m = build_mlp(&[3, 4], 17).unwrap();
        let x = [0.2, 0.7, 0.4];
        let y = 1;
        let p = m.predict(&x).unwrap();
        let r: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(i, v)| v - if i == y { 1.0 } else { 0.0 })
            .collect();
        let r2: f64 = r.iter().map(|v| v * v).sum();
        let x2: f64 = x.iter().map(|v| v * v).sum();
        let expected = r2 * x2 + r2;
        assert!(close(
            -grad_param_norm_score(&m, &x, y).unwrap(),
            expected,
            1e-12
        ));
    }

    #[test]
    fn grad_param_norm_vanishes_at_confident_fit() {
        let m = MlpClassifier::from_layers(vec![Dense {
            weight: Tensor::new(vec![2, 1], vec![40.0, -40.0]).unwrap(),
            bias: Tensor::zeros(vec![2]),
        }])
        .unwrap();
        let s = grad_param_norm_score(&m, &[1.0], 0).unwrap();
        assert!(s <= 0.0 && s.abs() <= 1e-8);
    }

    #[test]
    fn grad_input_norm_closed_form_for_linear_logits() {
        let m = build_mlp(&[3, 4], 5).unwrap();
        let x = [0.9, 0.1, 0.5];
        let y = 2;
        let p = m.predict(&x).unwrap();
        let w = m.layers()[0].weight.values();
        let mut wt_r = [0.0; 3];
        for (o, pv) in p.iter().enumerate() {
            let r = pv - if o == y { 1.0 } else { 0.0 };
            for j in 0..3 {
                wt_r[j] += w[o * 3 + j] * r;
            }
        }
        let expected = wt_r.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(close(
            -grad_input_norm_score(&m, &x, y).unwrap(),
            expected,
            1e-12
        ));
        let constant = MlpClassifier::zeros(&[3, 4]).unwrap();
        assert_eq!(grad_input_norm_score(&constant, &x, y).unwrap(), 0.0);
    }

    #[test]
    fn adversarial_distance_of_misclassified_sample_is_zero() {
        let m = model_with_output(&[0.9, 0.1]);
        let d = adversarial_distance_score(&m, &[0.5, 0.5], 1, &AttackConfig::default()).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn membership_decision_boundary_is_inclusive() {
        assert!(membership_decision(0.7, 0.5));
        assert!(membership_decision(0.5, 0.5));
        assert!(!membership_decision(-0.2, 0.0));
        assert!(DecisionThreshold { tau: -1.0 }.decide(-1.0));
    }

    #[test]
    fn shared_pass_matches_individual_scores() {
        let m = build_mlp(&[4, 6, 3], 2).unwrap();
        let x = [0.1, 0.9, 0.4, 0.3];
        let attack = AttackConfig {
            n_iter: 10,
            ..Default::default()
        };
        let all = score_sample(&m, &x, 1, &Strategy::ALL, &attack).unwrap();
        assert_eq!(all[0], softmax_response(&m, &x).unwrap());
        assert_eq!(all[1], modified_entropy_score(&m, &x, 1).unwrap());
        assert_eq!(all[2], loss_score(&m, &x, 1).unwrap());
        assert_eq!(all[3], grad_param_norm_score(&m, &x, 1).unwrap());
        assert_eq!(all[4], grad_input_norm_score(&m, &x, 1).unwrap());
        assert_eq!(
            all[5],
            adversarial_distance_score(&m, &x, 1, &attack).unwrap()
        );
        assert_eq!(
            all[2],
            -cross_entropy_loss(&m.predict(&x).unwrap(), 1).unwrap()
        );
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(Strategy::from_name(s.name()), Some(s));
        }
        assert_eq!(Strategy::from_name("entropy"), None);
    }

    #[test]
    fn score_csv_round_trip() {
        let records = vec![
            ScoreRecord {
                sample_id: 3,
                strategy: "loss".into(),
                score: -0.1234567890123,
                is_member: true,
            },
            ScoreRecord {
                sample_id: 9,
                strategy: "loss".into(),
                score: -2.5,
                is_member: false,
            },
        ];
        let mut buf = Vec::new();
        write_score_csv(&records, &mut buf).unwrap();
        assert!(buf.starts_with(b"sample_id,strategy,score,is_member\n"));
        assert_eq!(read_score_csv(buf.as_slice()).unwrap(), records);
        let bad = b"sample_id,strategy,score,is_member\n1,loss,abc,true\n";
        assert!(matches!(
            read_score_csv(&bad[..]),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
