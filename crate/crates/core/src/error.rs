use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A shape is invalid on its own (zero-sized, indivisible, wrong rank).
    #[error("invalid shape in {op}: {shape:?} ({reason})")]
    Shape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },

    /// A precondition of an API call was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Values are out of their admissible range (labels, subset sizes, empty data).
    #[error("data error: {0}")]
    Data(String),

    #[error("{}: bad format: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("{}: expected {expected} bytes, found {actual}", path.display())]
    Length {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn shape(op: &'static str, shape: &[usize], reason: impl Into<String>) -> Self {
        Error::Shape {
            op,
            shape: shape.to_vec(),
            reason: reason.into(),
        }
    }
}
