use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not fit the operation.
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{what} {index} out of range (limit {limit})")]
    Range {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    /// A caller broke an operation's calling contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("corpus produced an empty vocabulary")]
    EmptyVocab,

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    /// Training diverged; names the first parameter block holding a NaN or infinity.
    #[error("non-finite loss at step {step}; first non-finite block: {block}")]
    NonFinite { step: u64, block: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("empty hypothesis set")]
    EmptyHypotheses,

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
