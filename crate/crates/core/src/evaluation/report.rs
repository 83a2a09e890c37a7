use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::histogram::ScoreHistogram;
use super::protocols::RatioResult;
use super::roc::{AveragedRoc, MeanStd, ThresholdEval};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Target-model summary echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TargetSummary {
    pub layer_dims: Vec<usize>,
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
    pub members: usize,
    pub nonmembers: usize,
}

/// Metrics of one threshold strategy or trained attacker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    /// Balanced analysis over repeated member subsets.
    pub auroc: MeanStd,
    pub accuracy: MeanStd,
    /// Imbalanced analysis: threshold chosen on one split, applied to the other.
    pub threshold: ThresholdEval,
    pub roc: AveragedRoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<RatioResult>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<ScoreHistogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSummary>,
    pub strategies: BTreeMap<String, StrategyReport>,
}

impl EvalReport {
    pub fn new(seed: u64, config: BTreeMap<String, String>) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            seed,
            config,
            target: None,
            strategies: BTreeMap::new(),
        }
    }
}
