use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("Lipschitz constant of {0} requires a finite domain bound")]
    MissingDomainBound(&'static str),

    #[error("explicit lowering needs {needed} bytes, budget is {budget}")]
    LoweringBudget { needed: usize, budget: usize },

    #[error("sn-product-only report: {0} needs (2,1) norms that are unavailable")]
    SnProductOnly(&'static str),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),

    #[error("checkpoint shape inconsistency: {0}")]
    CheckpointShape(String),

    #[error("unsupported checkpoint format version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("{path}: wrong IDX magic {found:#010x} (expected {expected:#010x})")]
    IdxMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated IDX payload ({found} bytes, expected {expected})")]
    IdxTruncated {
        path: PathBuf,
        found: usize,
        expected: usize,
    },

    #[error("IDX count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("malformed report: {0}")]
    MalformedReport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
