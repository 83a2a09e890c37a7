use advmia::evaluation::{
    auroc, averaged_roc_on_grid, best_threshold_accuracy, default_fpr_grid, roc_curve,
    LabeledScoreSet,
};
use proptest::prelude::*;

fn mann_whitney(set: &LabeledScoreSet) -> f64 {
    let m = set.member_scores();
    let n = set.nonmember_scores();
    let mut wins = 0.0;
    for a in &m {
        for b in &n {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    wins / (m.len() * n.len()) as f64
}

/// Score sets with both classes and many ties (scores drawn from a small grid).
fn score_set() -> impl Strategy<Value = LabeledScoreSet> {
    (2usize..200, 1u32..40).prop_flat_map(|(n, levels)| {
        prop::collection::vec((0..levels, any::<bool>()), n).prop_map(move |mut v| {
            v[0].1 = true;
            v[1].1 = false;
            let entries = v.into_iter().map(|(s, m)| (s as f64 / 7.0, m)).collect();
            LabeledScoreSet::new("p", entries).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn auroc_equals_pair_statistic(set in score_set()) {
        prop_assert!((auroc(&set).unwrap() - mann_whitney(&set)).abs() <= 1e-12);
    }

    #[test]
    fn strictly_increasing_transforms_preserve_roc(set in score_set()) {
        let mapped = LabeledScoreSet::new(
            "p",
            set.entries.iter().map(|(s, m)| ((3.0 * s).exp() - 7.0, *m)).collect(),
        ).unwrap();
        let (a, b) = (roc_curve(&set).unwrap(), roc_curve(&mapped).unwrap());
        prop_assert_eq!(a.fpr, b.fpr);
        prop_assert_eq!(a.tpr, b.tpr);
        prop_assert_eq!(auroc(&set).unwrap(), auroc(&mapped).unwrap());
    }

    #[test]
    fn negation_reflects_auroc(set in score_set()) {
        let neg = LabeledScoreSet::new("p", set.entries.iter().map(|(s, m)| (-s, *m)).collect()).unwrap();
        prop_assert!((auroc(&neg).unwrap() - (1.0 - auroc(&set).unwrap())).abs() <= 1e-12);
    }

    #[test]
    fn roc_is_monotone_and_bounded(set in score_set()) {
        let c = roc_curve(&set).unwrap();
        prop_assert_eq!((c.fpr[0], c.tpr[0]), (0.0, 0.0));
        prop_assert_eq!((*c.fpr.last().unwrap(), *c.tpr.last().unwrap()), (1.0, 1.0));
        for w in c.fpr.windows(2) { prop_assert!(w[0] <= w[1]); }
        for w in c.tpr.windows(2) { prop_assert!(w[0] <= w[1]); }
    }

    #[test]
    fn best_accuracy_on_balanced_sets_is_at_least_half(
        scores in prop::collection::vec((0u32..10, 0u32..10), 1..60)
    ) {
        let m: Vec<f64> = scores.iter().map(|p| p.0 as f64).collect();
        let n: Vec<f64> = scores.iter().map(|p| p.1 as f64).collect();
        let set = LabeledScoreSet::from_split("p", &m, &n).unwrap();
        prop_assert!(best_threshold_accuracy(&set).unwrap().1 >= 0.5);
    }

    #[test]
    fn copies_of_one_curve_average_without_spread(set in score_set(), k in 1usize..6) {
        let c = roc_curve(&set).unwrap();
        let avg = averaged_roc_on_grid(&vec![c.clone(); k], &default_fpr_grid(201)).unwrap();
        prop_assert!(avg.tpr_std.iter().all(|s| *s == 0.0));
        for (f, t) in avg.fpr.iter().zip(&avg.tpr_mean) {
            prop_assert_eq!(*t, c.tpr_at(*f));
        }
    }
}
