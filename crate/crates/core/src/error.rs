use alloc::string::String;

use crate::tensor::Shape;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs} and {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("{op}: invalid shape {shape}: {reason}")]
    InvalidShape {
        op: &'static str,
        shape: Shape,
        reason: String,
    },
    #[error("{op} produced a non-finite value (output {shape})")]
    NonFinite { op: &'static str, shape: Shape },
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(
        "training diverged at step {step} (epoch {epoch}, lr {lr:e}): loss {loss}; recent losses {recent:?}"
    )]
    Diverged {
        epoch: usize,
        step: u64,
        lr: f64,
        loss: f32,
        recent: alloc::vec::Vec<f32>,
    },
    #[error("training hook failed: {0}")]
    Hook(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }
}
