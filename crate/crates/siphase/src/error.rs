//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A sampling-scheme invariant is violated; the message names the violation.
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),

    #[error("signal has no nonzero coefficient")]
    EmptySignal,

    /// A linear system that full spark should make solvable is too ill
    /// conditioned to trust.
    #[error("scheme degenerate: {0}")]
    SchemeDegenerate(String),

    #[error("missing sample: {0}")]
    MissingSample(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Process exit code used by the CLI: 2 for scheme validation failures,
    /// 3 for anything that went wrong reading or writing files, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidScheme(_) => 2,
            Error::Io(_) | Error::Parse(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
