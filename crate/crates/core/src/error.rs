use thiserror::Error;

use crate::directive::ReductionOp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OmpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Misuse of a construct that the caller controls, e.g. unbalanced critical exit.
    #[error("logic error: {0}")]
    Logic(String),
    #[error("private variable read before assignment")]
    ReadBeforeWrite,
    #[error("reduction `{op}` is not defined for {ty}")]
    UnsupportedReduction { op: ReductionOp, ty: &'static str },
    #[error("copyprivate payload type mismatch: expected {expected}")]
    PayloadType { expected: &'static str },
}

pub type Result<T, E = OmpError> = std::result::Result<T, E>;
