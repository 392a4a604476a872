use thiserror::Error;

use crate::fsm::StateId;

/// Errors produced anywhere in the watermark toolkit.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid machine: {0}")]
    Semantic(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("alphabet mismatch: {0}")]
    Alphabet(String),

    #[error("hash collision: rows/columns ({0}) and ({1}) both map to state {2}")]
    HashCollision(String, String, StateId),

    #[error("state count {states} exceeds the lattice cap {cap}")]
    CapExceeded { states: usize, cap: usize },

    #[error("partition is not input-preserving: {0}")]
    NotInputPreserving(String),

    #[error("incompatible blocks: no common state")]
    IncompatibleBlocks,

    #[error("no nontrivial orthogonal partition pair exists; only the trivial decomposition")]
    TrivialOnly,

    #[error("internal construction error: {0}")]
    Internal(String),

    #[error("inconsistent transcript: {0}")]
    InconsistentTranscript(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed package: {0}")]
    MalformedPackage(String),
}

pub type Result<T> = std::result::Result<T, Error>;
