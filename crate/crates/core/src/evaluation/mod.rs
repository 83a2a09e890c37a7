//! ROC machinery, threshold selection, the repeated balanced analysis, the
//! threshold-holdout analysis, ratio robustness and score histograms.

pub mod histogram;
pub mod protocols;
pub mod report;
pub mod roc;

pub use histogram::{histogram_range, score_histogram, ScoreHistogram};
pub use protocols::{
    balanced_analysis, ratio_robustness_experiment, repeat_seed, repeated_subset_experiment,
    sample_indices, ProtocolConfig, RatioResult, SubsetSummary,
};
pub use report::{EvalReport, StrategyReport, TargetSummary, REPORT_SCHEMA_VERSION};
pub use roc::{
    auroc, averaged_roc_on_grid, best_threshold_accuracy, best_threshold_balanced,
    default_fpr_grid, fixed_threshold_eval, holdout_threshold_eval, roc_curve, stratified_split,
    AveragedRoc, LabeledScoreSet, MeanStd, RocCurve, ThresholdEval,
};
