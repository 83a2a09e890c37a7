//! Membership-inference privacy auditing for small neural classifiers.
//!
//! The crate trains multilayer perceptrons, scores samples with threshold
//! criteria (confidence, entropy, loss, gradient norms and the minimal
//! adversarial perturbation distance), trains learned attackers over extracted
//! features and evaluates everything with ROC-based protocols.

pub mod adversarial;
pub mod attack_models;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod runner;
pub mod scores;

pub use error::{Error, Result};
