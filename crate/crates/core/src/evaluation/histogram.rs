use serde::{Deserialize, Serialize};

use super::roc::LabeledScoreSet;
use crate::error::{Error, Result};

/// Equal-width bins with per-class counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub edges: Vec<f64>,
    pub member_counts: Vec<u64>,
    pub nonmember_counts: Vec<u64>,
}

/// Values outside `range` land in the end bins.
pub fn score_histogram(
    set: &LabeledScoreSet,
    n_bins: usize,
    range: (f64, f64),
) -> Result<ScoreHistogram> {
    let (lo, hi) = range;
    if n_bins == 0 {
        return Err(Error::Config("histogram needs at least 1 bin".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Config(format!(
            "invalid histogram range [{lo}, {hi}]"
        )));
    }
    let width = (hi - lo) / n_bins as f64;
    let edges = (0..=n_bins)
        .map(|i| {
            if i == n_bins {
                hi
            } else {
                lo + width * i as f64
            }
        })
        .collect();
    let mut member_counts = vec![0; n_bins];
    let mut nonmember_counts = vec![0; n_bins];
    for (s, m) in &set.entries {
        let b = (((s - lo) / width).floor().max(0.0) as usize).min(n_bins - 1);
        if *m {
            member_counts[b] += 1;
        } else {
            nonmember_counts[b] += 1;
        }
    }
    Ok(ScoreHistogram {
        edges,
        member_counts,
        nonmember_counts,
    })
}

/// `[min, max]` of the set's finite scores, widened by 0.5 on each side when
/// degenerate.
pub fn histogram_range(set: &LabeledScoreSet) -> (f64, f64) {
    let finite = set.entries.iter().map(|e| e.0).filter(|s| s.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| {
        (a.min(s), b.max(s))
    });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
