use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::roc::{
    auroc, averaged_roc_on_grid, best_threshold_accuracy, default_fpr_grid, roc_curve, AveragedRoc,
    LabeledScoreSet, MeanStd,
};
use crate::error::{Error, Result};

/// Sizes, repeat counts and seeds of the evaluation protocols.
///
/// `None` sizes are resolved against the pools: the non-member subset is the
/// whole non-member pool and the member subset matches it (capped by the
/// member pool), which keeps the balanced analysis balanced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub member_pool_size: Option<usize>,
    pub nonmember_pool_size: Option<usize>,
    pub member_subset_size: Option<usize>,
    pub repeats: usize,
    /// `(members, non-members)` proportions for the ratio experiment.
    pub ratios: Vec<(usize, usize)>,
    /// Fixed non-member count of the ratio experiment.
    pub ratio_nonmembers: Option<usize>,
    pub ratio_repeats: usize,
    pub holdout_fraction: f64,
    pub fpr_grid_points: usize,
    pub histogram_bins: usize,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            member_pool_size: None,
            nonmember_pool_size: None,
            member_subset_size: None,
            repeats: 20,
            ratios: vec![(5, 1), (1, 1), (1, 5)],
            ratio_nonmembers: None,
            ratio_repeats: 100,
            holdout_fraction: 0.8,
            fpr_grid_points: 201,
            histogram_bins: 50,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 || self.ratio_repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config("holdout fraction must lie in (0, 1)".into()));
        }
        if self.fpr_grid_points < 2 {
            return Err(Error::Config("the FPR grid needs at least 2 points".into()));
        }
        if self.histogram_bins == 0 {
            return Err(Error::Config("histogram needs at least 1 bin".into()));
        }
        if self.ratios.iter().any(|(m, n)| *m == 0 || *n == 0) {
            return Err(Error::Config("ratio parts must be positive".into()));
        }
        Ok(())
    }

    /// `(member pool, non-member pool, member subset, non-member subset)`
    /// for pools of the given sizes.
    pub fn resolve_sizes(
        &self,
        members: usize,
        nonmembers: usize,
    ) -> Result<(usize, usize, usize)> {
        let mpool = self.member_pool_size.unwrap_or(members);
        let npool = self.nonmember_pool_size.unwrap_or(nonmembers);
        if mpool > members || npool > nonmembers {
            return Err(Error::Config(format!(
                "pool sizes {mpool}/{npool} exceed the available {members}/{nonmembers} samples"
            )));
        }
        let msub = self.member_subset_size.unwrap_or(mpool.min(npool));
        if msub > mpool {
            return Err(Error::Config(format!(
                "member subset {msub} is larger than the member pool {mpool}"
            )));
        }
        if msub == 0 || npool == 0 {
            return Err(Error::Config("empty evaluation subset".into()));
        }
        Ok((mpool, npool, msub))
    }
}

/// Per-repeat seed derived from the master seed.
pub fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    let mut z = seed
        ^ (repeat as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `k` sorted distinct indices drawn uniformly from `0..n`.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::Config(format!("cannot draw {k} of {n} samples")));
    }
    if k == n {
        return Ok((0..n).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Runs `metric` on `repeats` uniform member subsets drawn from the first
/// `member_pool` members, each paired with the first `nonmember_pool`
/// non-members. Repeats run in parallel and are returned in order.
pub fn repeated_subset_experiment<T, R, F>(
    member_pool: &[T],
    nonmember_pool: &[T],
    protocol: &ProtocolConfig,
    metric: F,
) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&[&T], &[&T]) -> Result<R> + Sync,
{
    protocol.validate()?;
    let (mpool, npool, msub) = protocol.resolve_sizes(member_pool.len(), nonmember_pool.len())?;
    let nonmembers: Vec<&T> = nonmember_pool[..npool].iter().collect();
    (0..protocol.repeats)
        .into_par_iter()
        .map(|r| {
            let idx = sample_indices(mpool, msub, repeat_seed(protocol.seed, r))?;
            let members: Vec<&T> = idx.iter().map(|i| &member_pool[*i]).collect();
            metric(&members, &nonmembers)
        })
        .collect()
}

/// Balanced-analysis result for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummary {
    pub auroc: MeanStd,
    pub accuracy: MeanStd,
    pub per_repeat_auroc: Vec<f64>,
    pub per_repeat_accuracy: Vec<f64>,
    pub roc: AveragedRoc,
}

/// Repeated balanced analysis over per-sample score rows; column `j` of every
/// row belongs to `strategies[j]`.
pub fn balanced_analysis(
    strategies: &[String],
    member_rows: &[Vec<f64>],
    nonmember_rows: &[Vec<f64>],
    protocol: &ProtocolConfig,
) -> Result<BTreeMap<String, SubsetSummary>> {
    let per_repeat = repeated_subset_experiment(member_rows, nonmember_rows, protocol, |m, n| {
        strategies
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let ms: Vec<f64> = m.iter().map(|r| r[j]).collect();
                let ns: Vec<f64> = n.iter().map(|r| r[j]).collect();
                let set = LabeledScoreSet::from_split(name.clone(), &ms, &ns)?;
                Ok((
                    auroc(&set)?,
                    best_threshold_accuracy(&set)?.1,
                    roc_curve(&set)?,
                ))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let grid = default_fpr_grid(protocol.fpr_grid_points);
    let mut out = BTreeMap::new();
    for (j, name) in strategies.iter().enumerate() {
        let aucs: Vec<f64> = per_repeat.iter().map(|r| r[j].0).collect();
        let accs: Vec<f64> = per_repeat.iter().map(|r| r[j].1).collect();
        let curves: Vec<_> = per_repeat.iter().map(|r| r[j].2.clone()).collect();
        out.insert(
            name.clone(),
            SubsetSummary {
                auroc: MeanStd::of(&aucs),
                accuracy: MeanStd::of(&accs),
                per_repeat_auroc: aucs,
                per_repeat_accuracy: accs,
                roc: averaged_roc_on_grid(&curves, &grid)?,
            },
        );
    }
    Ok(out)
}

/// AUROC at one member:non-member proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioResult {
    pub members: usize,
    pub nonmembers: usize,
    pub ratio: String,
    pub auroc: MeanStd,
}

/// Evaluates AUROC at each ratio against one fixed non-member set, realising
/// the ratio by uniform member subsampling. A ratio that needs every member
/// is evaluated once.
pub fn ratio_robustness_experiment(
    member_scores: &[f64],
    nonmember_scores: &[f64],
    protocol: &ProtocolConfig,
) -> Result<Vec<RatioResult>> {
    protocol.validate()?;
    let (m_total, n_total) = (member_scores.len(), nonmember_scores.len());
    // Largest non-member count for which every ratio fits in the member pool
    // with an integral member count.
    let mut feasible = protocol
        .ratios
        .iter()
        .map(|(rm, rn)| m_total * rn / rm)
        .fold(n_total, usize::min);
    while feasible > 0
        && protocol
            .ratios
            .iter()
            .any(|(rm, rn)| !(feasible * rm).is_multiple_of(*rn))
    {
        feasible -= 1;
    }
    let n_fixed = protocol.ratio_nonmembers.unwrap_or(feasible);
    if n_fixed == 0 || n_fixed > n_total {
        return Err(Error::Config(format!(
            "ratio experiment cannot use {n_fixed} of {n_total} non-members"
        )));
    }
    let nidx = sample_indices(n_total, n_fixed, repeat_seed(protocol.seed, usize::MAX))?;
    let nonmembers: Vec<f64> = nidx.iter().map(|i| nonmember_scores[*i]).collect();

    protocol
        .ratios
        .iter()
        .enumerate()
        .map(|(k, (rm, rn))| {
            let count = n_fixed * rm / rn;
            if count == 0 || count > m_total || !(n_fixed * rm).is_multiple_of(*rn) {
                return Err(Error::Config(format!(
                    "ratio {rm}:{rn} is infeasible with {m_total} members and {n_fixed} non-members"
                )));
            }
            let repeats = if count == m_total {
                1
            } else {
                protocol.ratio_repeats
            };
            let aucs = (0..repeats)
                .into_par_iter()
                .map(|r| {
                    let seed = repeat_seed(repeat_seed(protocol.seed, k), r);
                    let idx = sample_indices(m_total, count, seed)?;
                    let ms: Vec<f64> = idx.iter().map(|i| member_scores[*i]).collect();
                    auroc(&LabeledScoreSet::from_split("ratio", &ms, &nonmembers)?)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(RatioResult {
                members: count,
                nonmembers: n_fixed,
                ratio: format!("{rm}:{rn}"),
                auroc: MeanStd::of(&aucs),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_repeat_has_zero_std() {
        let m: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let n: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 2.0]).collect();
        let p = ProtocolConfig {
            repeats: 1,
            ..Default::default()
        };
        let r = balanced_analysis(&["s".into()], &m, &n, &p).unwrap();
        assert_eq!(r["s"].auroc.std, 0.0);
        assert_eq!(r["s"].accuracy.std, 0.0);
    }

    #[test]
    fn whole_pool_subset_repeats_identically() {
        let m: Vec<Vec<f64>> = (0..10).map(|i| vec![(i * 7 % 5) as f64]).collect();
        let n: Vec<Vec<f64>> = (0..10).map(|i| vec![(i * 3 % 4) as f64]).collect();
        let p = ProtocolConfig {
            repeats: 4,
            ..Default::default()
        };
        let r = balanced_analysis(&["s".into()], &m, &n, &p).unwrap();
        assert!(r["s"].per_repeat_auroc.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(r["s"].auroc.std, 0.0);
    }

    #[test]
    fn seeds_change_subsets_not_schema() {
        let m: Vec<usize> = (0..100).collect();
        let n: Vec<usize> = (0..10).collect();
        let run = |seed| {
            let p = ProtocolConfig {
                repeats: 3,
                seed,
                ..Default::default()
            };
            repeated_subset_experiment(&m, &n, &p, |a, _| {
                Ok(a.iter().map(|v| **v).collect::<Vec<_>>())
            })
            .unwrap()
        };
        let (a, b) = (run(1), run(2));
        assert_eq!(a.len(), b.len());
        assert_eq!(a[0].len(), b[0].len());
        assert_ne!(a, b);
        assert_eq!(a, run(1));
    }

    #[test]
    fn oversized_subset_is_a_config_error() {
        let p = ProtocolConfig {
            member_subset_size: Some(50),
            ..Default::default()
        };
        let r = repeated_subset_experiment(&[0; 10], &[0; 10], &p, |_, _| Ok(()));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn ratio_extremes() {
        let m: Vec<f64> = (0..50).map(|i| 10.0 + i as f64).collect();
        let n: Vec<f64> = (0..50).map(|i| -(i as f64)).collect();
        let p = ProtocolConfig::default();
        let r = ratio_robustness_experiment(&m, &n, &p).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[0].members, 50);
        assert_eq!(r[0].nonmembers, 10);
        assert_eq!(r[2].members, 2);
        assert!(r.iter().all(|x| x.auroc.mean == 1.0));
        let r = ratio_robustness_experiment(&[0.5; 50], &[0.5; 50], &p).unwrap();
        assert!(r.iter().all(|x| x.auroc.mean == 0.5));
    }

    #[test]
    fn automatic_nonmember_count_keeps_member_counts_integral() {
        let m: Vec<f64> = (0..36).map(f64::from).collect();
        let r = ratio_robustness_experiment(&m, &m, &ProtocolConfig::default()).unwrap();
        assert_eq!(
            r.iter().map(|x| x.nonmembers).collect::<Vec<_>>(),
            vec![5, 5, 5]
        );
        assert_eq!(
            r.iter().map(|x| x.members).collect::<Vec<_>>(),
            vec![25, 5, 1]
        );
    }

    #[test]
    fn infeasible_ratio_is_a_config_error() {
        let p = ProtocolConfig {
            ratio_nonmembers: Some(40),
            ..Default::default()
        };
        let r = ratio_robustness_experiment(&[1.0; 50], &[0.0; 50], &p);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
