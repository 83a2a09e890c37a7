//! Untargeted adversarial examples: ℓp-ball-and-box projections and
//! adaptive-step projected gradient ascent on the classification loss.

pub mod apgd;
pub mod projection;

pub use apgd::{
    apgd_from, apgd_maximize_loss, find_adversarial, find_adversarial_budgets, AdversarialOutcome,
    AttackConfig, AttackTrace, TraceStep, CHECKPOINT_FRACTIONS, IMPROVEMENT_RATIO,
};
pub use projection::{project_l1_ball, project_lp_box, BoxBounds, Norm};
