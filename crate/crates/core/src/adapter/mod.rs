//! Bottleneck adapters on a frozen toy encoder-decoder: adapter math, exact
//! parameter accounting, hand-written backprop, gradient checking and
//! adapter-only training.

mod gradcheck;
mod layers;
mod model;
mod params;
mod train;

use thiserror::Error;

pub use gradcheck::{grad_check, GradCheckReport, TensorCheck, REL_ERROR_FLOOR};
pub use layers::{Grads, ParamId, ParamStore, Tag, Tensor};
pub use model::{
    build_toy_model, ForwardOutput, FreezeReport, TensorSummary, ToyConfig, ToyModel, BOS,
};
pub use params::{
    adapter_forward, count_adapter_params, percent_of, round2, AdapterParams, AdapterSet,
    ModelDims, ParamCount, REFERENCE_BASE_PARAMS, REFERENCE_BOTTLENECK, REFERENCE_D_MODEL,
    REFERENCE_LAYERS,
};
pub use train::{
    copy_task, mean_loss, train_adapters, Example, Optimizer, Schedule, TrainHyper, TrainLog,
};

/// Floating-point element type of the toy model.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdapterError {
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: String,
        found: String,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid adapter set: {0}")]
    InvalidAdapterSet(String),
    #[error("{0} sequence is empty")]
    EmptySequence(&'static str),
    #[error("{what} sequence has {len} tokens, model maximum is {max}")]
    SequenceTooLong {
        what: &'static str,
        len: usize,
        max: usize,
    },
    #[error("token id {token} outside vocabulary of {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("loss became non-finite ({loss}) at step {step}")]
    Divergence { step: usize, loss: f64 },
}
