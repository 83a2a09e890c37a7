//! Trained membership attackers: gradient-statistics logistic models,
//! intermediate-output and white-box combiners, and the six-score ensemble.

pub mod attacker;
pub mod features;
pub mod scaler;
pub mod stats;

pub use attacker::{
    attacker_score, build_and_train_ensemble, fit_logistic_attacker, fit_logistic_attacker_with,
    fit_mlp_attacker, load_attacker, read_attacker, save_attacker, write_attacker, AttackerKind,
    AttackerTrainConfig, LogisticConfig, TrainedAttacker, ENSEMBLE_FEATURES, ENSEMBLE_HIDDEN,
    WB_HIDDEN,
};
pub use features::{
    extract_grad_w_stats, extract_grad_x_stats, extract_intermediate_outputs,
    extract_output_probabilities, extract_six_scores, extract_wb_features, FeatureKind,
    FeatureVector,
};
pub use scaler::MinMaxScaler;
pub use stats::{gradient_statistics, GradStats};
