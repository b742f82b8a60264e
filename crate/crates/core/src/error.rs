use thiserror::Error;

use crate::types::RowKey;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("clock index must be >= 1 (got {0})")]
    ClockIndexZero(u64),

    #[error("drifted schedule needs t > r (t = {t}, r = {drift})")]
    DriftExceedsIndex { t: u64, drift: u64 },

    #[error("worker count must be >= 1")]
    NoWorkers,

    #[error("delta length mismatch on row {row}: expected {expected}, got {got}")]
    LengthMismatch { row: RowKey, expected: usize, got: usize },

    #[error("coalesce input mixes (worker, clock) tags: ({0}, {1}) vs ({2}, {3})")]
    MixedBatch(usize, u64, usize, u64),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("workload has no closed-form optimum")]
    NoOptimum,

    #[error("replica traces disagree: {0}")]
    ReplicaMismatch(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("timed out waiting for row {0}")]
    Timeout(RowKey),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
