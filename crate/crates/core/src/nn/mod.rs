//! A small deterministic CNN engine.
//!
//! Networks are [`LayerStack`]s evaluated one sample at a time in `f64`.
//! A train-mode forward pass returns a [`Tape`] holding what the backward
//! pass needs; batching and gradient accumulation are left to the training
//! loops, which sum per-sample gradients in a fixed order.

mod checkpoint;
mod gemm;
mod gradcheck;
mod layer;
mod loss;
mod sgd;
mod stack;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::{
    analytic_param_grads, checked_params, gradcheck_suite, gradient_check, numeric_gradient, numeric_param_grads,
    relative_error, GradCheckCase, GradCheckConfig, ParamRef, LOSS_TOLERANCE, STACK_TOLERANCE,
};
pub use layer::{Layer, LayerSpec};
pub use loss::{loss_binary_ce, loss_categorical_ce, loss_contrastive, ContrastiveLoss};
pub use sgd::{Sgd, SgdConfig};
pub use stack::{Grads, LayerGrad, LayerStack, Mode, Tape};
pub use tensor::Tensor;
