//! A small reverse-mode neural network engine for fixed layer pipelines.
//!
//! Samples are processed one at a time; mini-batches are sums of per-sample
//! gradients. Instance norm uses per-sample statistics only.

pub mod gradcheck;
mod layers;
mod loss;
mod network;
mod optim;
pub mod real;
mod tensor;
mod train;

pub use layers::{Cache, Layer, LayerSpec};
pub use loss::{bce_logit_grad, bce_loss, PROB_CLAMP};
pub use network::{Gradients, Network, Trace};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use real::Real;
pub use tensor::Tensor;
pub use train::{sample_gradient, train, train_with, BatchExecutor, Serial, TrainConfig, TrainReport};

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeuralError {
    #[error("layer {layer} ({kind}): {reason}, input shape {shape:?}")]
    Shape { layer: usize, kind: &'static str, reason: &'static str, shape: Vec<usize> },
    #[error("input shape {got:?} does not match model input {expected:?}")]
    Input { expected: Vec<usize>, got: Vec<usize> },
    #[error("non-finite value after layer {layer} ({kind})")]
    NonFinite { layer: usize, kind: &'static str },
    #[error("tensor shape {shape:?} does not hold {len} values")]
    BadTensor { shape: Vec<usize>, len: usize },
    #[error("backward called without a matching forward trace")]
    NoTrace,
    #[error("output gradient has {got} values, expected {expected}")]
    GradientLength { expected: usize, got: usize },
    #[error("expected {expected} parameter tensors, got {got}")]
    ParamMismatch { expected: usize, got: usize },
    #[error("parameter shape {got:?} does not match {expected:?}")]
    ParamShape { expected: Vec<usize>, got: Vec<usize> },
    #[error("training data is empty or labels do not match inputs")]
    EmptyDataset,
    #[error("label at index {0} is not 0 or 1")]
    NonBinaryLabel(usize),
    #[error("invalid training configuration: {0}")]
    BadConfig(&'static str),
}

/// Convolution block used by both model families: conv, instance norm,
/// ReLU, dropout and max pooling.
pub fn conv_block(conv: LayerSpec, dropout: f64, pool: usize) -> [LayerSpec; 5] {
    [conv, LayerSpec::InstanceNorm, LayerSpec::Relu, LayerSpec::Dropout { rate: dropout }, LayerSpec::MaxPool { size: pool }]
}
