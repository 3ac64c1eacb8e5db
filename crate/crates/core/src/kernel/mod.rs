//! Minimal reverse-mode differentiation engine.
//!
//! A [`Tape`] records one forward evaluation over borrowed [`Parameter`]s and
//! plain inputs; [`Tape::backward`] replays it in reverse and returns the
//! gradient of a scalar loss with respect to every trainable parameter that
//! took part. Only the operations the enhancement and speaker-ID networks
//! need are provided.

mod checkpoint;
mod conv;
mod init;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, CheckpointError, FORMAT_VERSION,
};
pub use conv::{conv1d_output_len, same_padding, Padding};
pub use init::Init;
pub use optim::{Optimizer, OptimizerKind, OptimizerSettings};
pub use params::{Gradients, ParamStore, Parameter};
pub use tape::{Tape, Var};
pub use tensor::{DType, Real, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid shape {0:?}: every dimension must be positive")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {} values, got {len}", .shape.iter().product::<usize>())]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("{op}: expected shape {expected:?}, got {actual:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("{op}: invalid argument: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("backward called without a recorded forward pass producing this value")]
    NoForward,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}
