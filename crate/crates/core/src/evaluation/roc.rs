use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::ScoreRecord;

/// Scores of one strategy with ground-truth membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScoreSet {
    pub strategy: String,
    pub entries: Vec<(f64, bool)>,
}

impl LabeledScoreSet {
    pub fn new(strategy: impl Into<String>, entries: Vec<(f64, bool)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Evaluation("empty score set".into()));
        }
        if let Some((s, _)) = entries.iter().find(|(s, _)| s.is_nan()) {
            return Err(Error::Evaluation(format!("score {s} is not a number")));
        }
        Ok(Self {
            strategy: strategy.into(),
            entries,
        })
    }

    /// Builds a set from member and non-member score lists.
    pub fn from_split(
        strategy: impl Into<String>,
        members: &[f64],
        nonmembers: &[f64],
    ) -> Result<Self> {
        let entries = members
            .iter()
            .map(|s| (*s, true))
            .chain(nonmembers.iter().map(|s| (*s, false)))
            .collect();
        Self::new(strategy, entries)
    }

    /// Collects the records of `strategy`, in input order.
    pub fn from_records(strategy: &str, records: &[ScoreRecord]) -> Result<Self> {
        let entries = records
            .iter()
            .filter(|r| r.strategy == strategy)
            .map(|r| (r.score, r.is_member))
            .collect();
        Self::new(strategy, entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(members, non-members)`.
    pub fn class_counts(&self) -> (u64, u64) {
        let p = self.entries.iter().filter(|e| e.1).count() as u64;
        (p, self.entries.len() as u64 - p)
    }

    pub fn member_scores(&self) -> Vec<f64> {
        self.entries.iter().filter(|e| e.1).map(|e| e.0).collect()
    }

    pub fn nonmember_scores(&self) -> Vec<f64> {
        self.entries.iter().filter(|e| !e.1).map(|e| e.0).collect()
    }

    fn require_both_classes(&self) -> Result<(u64, u64)> {
        let (p, n) = self.class_counts();
        if p == 0 || n == 0 {
            return Err(Error::Evaluation(format!(
                "{}: both members and non-members are required",
                self.strategy
            )));
        }
        Ok((p, n))
    }

    /// Distinct scores in descending order with their `(members, non-members)`
    /// counts.
    fn descending_groups(&self) -> Vec<(f64, u64, u64)> {
        let mut sorted = self.entries.clone();
        sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut groups: Vec<(f64, u64, u64)> = Vec::new();
        for (s, m) in sorted {
            match groups.last_mut() {
                Some(g) if g.0 == s => {
                    if m {
                        g.1 += 1
                    } else {
                        g.2 += 1
                    }
                }
                _ => groups.push((s, m as u64, !m as u64)),
            }
        }
        groups
    }
}

/// ROC points ordered by decreasing threshold, from `(0, 0)` at `τ = +∞` to
/// `(1, 1)` at the smallest score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub thresholds: Vec<f64>,
}

impl RocCurve {
    pub fn len(&self) -> usize {
        self.fpr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fpr.is_empty()
    }

    /// Largest TPR reachable at false-positive rate `f`, linearly interpolated
    /// between the surrounding points.
    pub fn tpr_at(&self, f: f64) -> f64 {
        let idx = self.fpr.partition_point(|x| *x <= f);
        if idx == 0 {
            return 0.0;
        }
        let i = idx - 1;
        if i + 1 == self.fpr.len() || self.fpr[i] == f {
            return self.tpr[i];
        }
        let (f0, f1) = (self.fpr[i], self.fpr[i + 1]);
        let (t0, t1) = (self.tpr[i], self.tpr[i + 1]);
        t0 + (t1 - t0) * (f - f0) / (f1 - f0)
    }
}

/// Sweep of the rule `score ≥ τ ⇒ member` over every distinct score; tied
/// scores switch together.
pub fn roc_curve(set: &LabeledScoreSet) -> Result<RocCurve> {
    let (p, n) = set.require_both_classes()?;
    let mut curve = RocCurve {
        fpr: vec![0.0],
        tpr: vec![0.0],
        thresholds: vec![f64::INFINITY],
    };
    let (mut tp, mut fp) = (0u64, 0u64);
    for (s, m, nm) in set.descending_groups() {
        tp += m;
        fp += nm;
        curve.fpr.push(fp as f64 / n as f64);
        curve.tpr.push(tp as f64 / p as f64);
        curve.thresholds.push(s);
    }
    Ok(curve)
}

/// Trapezoidal area under [`roc_curve`], accumulated in integer counts so it
/// equals the Mann–Whitney statistic.
pub fn auroc(set: &LabeledScoreSet) -> Result<f64> {
    let (p, n) = set.require_both_classes()?;
    let mut twice_area: u128 = 0;
    let mut tp: u128 = 0;
    for (_, m, nm) in set.descending_groups() {
        twice_area += nm as u128 * (2 * tp + m as u128);
        tp += m as u128;
    }
    Ok(twice_area as f64 / (2 * p as u128 * n as u128) as f64)
}

/// Ascending candidate thresholds: `-∞`, midpoints of adjacent distinct
/// scores, `+∞`. Each is paired with `(tp, tn)` counts.
fn threshold_sweep(set: &LabeledScoreSet) -> Vec<(f64, u64, u64)> {
    let (p, _) = set.class_counts();
    let mut groups = set.descending_groups();
    groups.reverse();
    let mut out = Vec::with_capacity(groups.len() + 1);
    let (mut tp, mut tn) = (p, 0u64);
    out.push((f64::NEG_INFINITY, tp, tn));
    for (i, (s, m, nm)) in groups.iter().enumerate() {
        tp -= m;
        tn += nm;
        let tau = match groups.get(i + 1) {
            Some((next, _, _)) => s + (next - s) / 2.0,
            None => f64::INFINITY,
        };
        out.push((tau, tp, tn));
    }
    out
}

fn best_by<F: Fn(u64, u64) -> u128>(set: &LabeledScoreSet, objective: F) -> (f64, u64, u64) {
    let mut best: Option<(u128, (f64, u64, u64))> = None;
    for c in threshold_sweep(set) {
        let v = objective(c.1, c.2);
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, c));
        }
    }
    best.map(|b| b.1).unwrap_or((f64::INFINITY, 0, 0))
}

/// Threshold maximising raw accuracy; the smallest maximiser wins ties.
pub fn best_threshold_accuracy(set: &LabeledScoreSet) -> Result<(f64, f64)> {
    set.require_both_classes()?;
    let (tau, tp, tn) = best_by(set, |tp, tn| (tp + tn) as u128);
    Ok((tau, (tp + tn) as f64 / set.len() as f64))
}

/// Threshold maximising balanced accuracy; the smallest maximiser wins ties.
pub fn best_threshold_balanced(set: &LabeledScoreSet) -> Result<(f64, f64)> {
    let (p, n) = set.require_both_classes()?;
    let (tau, tp, tn) = best_by(set, |tp, tn| {
        tp as u128 * n as u128 + tn as u128 * p as u128
    });
    Ok((tau, balanced(tp, p, tn, n)))
}

fn balanced(tp: u64, p: u64, tn: u64, n: u64) -> f64 {
    (tp as f64 / p as f64 + tn as f64 / n as f64) / 2.0
}

/// Outcome of thresholding an evaluation split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEval {
    pub threshold: f64,
    pub balanced_accuracy: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Applies a fixed threshold to the whole set.
pub fn fixed_threshold_eval(set: &LabeledScoreSet, tau: f64) -> Result<ThresholdEval> {
    let (p, n) = set.require_both_classes()?;
    let tp = set.entries.iter().filter(|e| e.1 && e.0 >= tau).count() as u64;
    let fp = set.entries.iter().filter(|e| !e.1 && e.0 >= tau).count() as u64;
    Ok(ThresholdEval {
        threshold: tau,
        balanced_accuracy: balanced(tp, p, n - fp, n),
        tpr: tp as f64 / p as f64,
        fpr: fp as f64 / n as f64,
    })
}

/// Stratified split: the selection part (`holdout_fraction` of each class)
/// picks the balanced-accuracy-maximising threshold, the rest evaluates it.
pub fn holdout_threshold_eval(
    set: &LabeledScoreSet,
    holdout_fraction: f64,
    seed: u64,
) -> Result<ThresholdEval> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::Config(format!(
            "holdout fraction must lie in (0, 1), got {holdout_fraction}"
        )));
    }
    set.require_both_classes()?;
    let (select, eval) = stratified_split(set, holdout_fraction, seed)?;
    let (tau, _) = best_threshold_balanced(&select)?;
    fixed_threshold_eval(&eval, tau)
}

/// Splits each class independently; the first set receives
/// `round(fraction · class size)` entries.
pub fn stratified_split(
    set: &LabeledScoreSet,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledScoreSet, LabeledScoreSet)> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..set.len())
            .filter(|i| set.entries[*i].1 == class)
            .collect();
        idx.shuffle(&mut rng);
        let k = (fraction * idx.len() as f64).round() as usize;
        if k == 0 || k == idx.len() {
            return Err(Error::Evaluation(format!(
                "{}: split of {} {} leaves an empty side",
                set.strategy,
                idx.len(),
                if class { "members" } else { "non-members" }
            )));
        }
        first.extend(idx[..k].iter().map(|i| set.entries[*i]));
        second.extend(idx[k..].iter().map(|i| set.entries[*i]));
    }
    Ok((
        LabeledScoreSet::new(set.strategy.clone(), first)?,
        LabeledScoreSet::new(set.strategy.clone(), second)?,
    ))
}

/// `k` evenly spaced points covering `[0, 1]`.
pub fn default_fpr_grid(k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..k).map(|i| i as f64 / (k - 1) as f64).collect(),
    }
}

/// Pointwise mean and population standard deviation of TPR on a fixed FPR grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedRoc {
    pub fpr: Vec<f64>,
    pub tpr_mean: Vec<f64>,
    pub tpr_std: Vec<f64>,
}

pub fn averaged_roc_on_grid(curves: &[RocCurve], fpr_grid: &[f64]) -> Result<AveragedRoc> {
    if fpr_grid.is_empty() {
        return Err(Error::Config("empty FPR grid".into()));
    }
    if curves.is_empty() {
        return Err(Error::Config("no ROC curves to average".into()));
    }
    if fpr_grid.iter().any(|f| !(0.0..=1.0).contains(f))
        || fpr_grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::Config(
            "FPR grid must be strictly ascending within [0, 1]".into(),
        ));
    }
    let mut tpr_mean = Vec::with_capacity(fpr_grid.len());
    let mut tpr_std = Vec::with_capacity(fpr_grid.len());
    for f in fpr_grid {
        let vals: Vec<f64> = curves.iter().map(|c| c.tpr_at(*f)).collect();
        let ms = MeanStd::of(&vals);
        tpr_mean.push(ms.mean);
        tpr_std.push(ms.std);
    }
    Ok(AveragedRoc {
        fpr: fpr_grid.to_vec(),
        tpr_mean,
        tpr_std,
    })
}

/// Mean and population (`ddof = 0`) standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        if values.iter().all(|v| *v == values[0]) {
            return Self::exact(values[0]);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }

    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            std: 0.0,
        }
    }
}

impl PartialOrd for MeanStd {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.mean.partial_cmp(&other.mean)
    }
}
