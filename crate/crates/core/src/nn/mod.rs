//! Dense tensors, multilayer-perceptron classifiers with exact reverse-mode
//! gradients, deterministic mini-batch training and binary checkpoints.

pub mod checkpoint;
pub mod mlp;
pub mod tensor;
pub mod train;

pub use mlp::{
    argmax, backward_gradients, build_mlp, cross_entropy_loss, empirical_risk, forward_predict,
    sigmoid, softmax, Dense, ForwardTrace, GradientBundle, LabeledSample, MlpClassifier,
    OutputHead, PROB_CLAMP,
};
pub use tensor::Tensor;
pub use train::{train, EarlyStop, Optimizer, TrainConfig, TrainHistory};
