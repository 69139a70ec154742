use std::io;

use thiserror::Error;

/// Errors produced by the search engine.
///
/// Variants split into two families that the CLI maps onto distinct exit
/// codes: input/validation problems ([`Error::is_validation`]) and runtime
/// failures (I/O, child-process protocol, numerical breakdowns).
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid misaligned: {0}")]
    GridMisaligned(String),

    #[error("invalid parameter spec {name}: {reason}")]
    InvalidSpec { name: String, reason: String },

    #[error("missing parameter spec: {0}")]
    MissingSpec(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("index {index} out of range (cardinality {cardinality})")]
    IndexOutOfRange { index: u64, cardinality: u64 },

    #[error("empty history")]
    EmptyHistory,

    #[error("{0}")]
    InvalidInput(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("negative dynamic power {0:.2} W")]
    NegativeDynamicPower(f64),

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    #[error("protocol error: {message} (line: {line:?})")]
    Protocol { message: String, line: String },

    #[error("evaluator returned error: {0}")]
    Remote(String),

    #[error("timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("channel closed: {0}")]
    ChannelClosed(String),

    #[error("accuracy {0} outside [0, 100]")]
    AccuracyRange(f64),

    #[error("stage {stage}: {message}")]
    Stage { stage: u8, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by malformed or out-of-contract inputs.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::GridMisaligned(_)
                | Error::InvalidSpec { .. }
                | Error::MissingSpec(_)
                | Error::InvalidConfig(_)
                | Error::IndexOutOfRange { .. }
                | Error::InvalidInput(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
