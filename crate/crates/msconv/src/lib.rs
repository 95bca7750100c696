//! Multi-scale convolution units for image super-resolution.
//!
//! The crate is organized around a single idea: a multi-scale convolution
//! layer is an S×S matrix of transformations over scale-indexed feature
//! groups, where output group `i` is the sum over `j` of entry `(i, j)`
//! applied to input group `j`. Classic designs (U-Net-style skip bodies,
//! octave convolution, multi-grid convolution) and the share-weight
//! cross-scale variants are different fillings of that matrix.
//!
//! Modules:
//!
//! - [`tensor`]: dense NCHW tensors with the convolution/resampling
//!   operator set and tape-based reverse-mode differentiation.
//! - [`unit`]: the transformation matrix, its named variants, weight
//!   sharing, and the split/aggregate convs that bracket a multi-scale
//!   body.
//! - [`complexity`]: analytic multiply-add and parameter counting.
//! - [`network`]: SRResNet- and CARN-style backbone builders plus
//!   checkpointing.
//! - [`pilot`]: the dilation/resampling pipeline algebra and its exact
//!   rearrangement identity.
//! - [`pipeline`]: bicubic degradation, patch sampling, L1/Adam training
//!   and Y-channel PSNR evaluation.
//! - [`verify`]: runnable invariant suites (oracles, gradient checks,
//!   equivalence identities) shared by the CLI and the test suite.

pub mod checkpoint;
pub mod complexity;
pub mod config;
pub mod network;
pub mod pareto;
pub mod pilot;
pub mod pipeline;
pub mod scalar;
pub mod tensor;
pub mod unit;
pub mod verify;

pub use scalar::{Dtype, Scalar};
pub use tensor::{Parameter, Shape, Tape, Tensor};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("non-finite values produced by `{op}`")]
    NonFinite { op: &'static str },
    #[error("backward on a detached tensor (no tape attached)")]
    Detached,
    #[error("operands belong to different tapes")]
    TapeMismatch,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged at iteration {iter} (loss = {loss})")]
    Diverged { iter: u64, loss: f64 },
    #[error("target unreachable: {0}")]
    Unreachable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
