//! Differentiable layer primitives with hand-written forward and backward
//! passes.
//!
//! Every layer comes as a pair: `f(x, params, ...) -> (y, ctx)` and
//! `f_grad(params, ctx, dy) -> (dx, dparams...)`. The ctx is consumed by
//! value, so it feeds exactly one backward call matching its forward call.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod pool;
mod residual;

pub use activation::{lrelu, lrelu_grad, LreluCtx};
pub use batchnorm::{batchnorm, batchnorm_grad, BatchNormCtx, BatchNormParams};
pub use conv::{conv1d, conv1d_grad, Conv1dCtx, Conv1dParams};
pub use dense::{dense, dense_grad, DenseCtx, DenseParams};
pub use dropout::{dropout, dropout_grad, DropoutCtx};
pub use pool::{maxpool1d, maxpool1d_grad, MaxPoolCtx};
pub use residual::{
    residual_block, residual_block_grad, ResidualBlockCtx, ResidualBlockGrads,
    ResidualBlockParams,
};

/// Execution mode. Train mode uses batch statistics, live dropout masks and
/// running-stat updates; eval mode is a deterministic pure function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Temporal padding policy for 1-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Symmetric zero padding of (k-1)/2 per side; requires odd k and
    /// preserves length at stride 1.
    Same,
    /// No padding; output shrinks by k-1.
    Valid,
}
