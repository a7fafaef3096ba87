//! Experiment harness: training runs with persistent traces, spectral
//! analysis of checkpoints, bound evaluation, the covering lab, trace
//! statistics and Lipschitz probes.

pub mod commands;
pub mod config;
pub mod train;

pub use commands::{cmd_analyze, cmd_bounds, cmd_cover_lab, cmd_lipschitz_probe, cmd_stats, BoundMode, BoundsArgs};
pub use config::{parse_architecture, DatasetKind, ExperimentConfig};
pub use train::{cmd_train, TrainOutcome};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file, arguments or command inputs.
    #[error("configuration error: {0}")]
    Config(String),
    /// Unreadable or malformed data files.
    #[error("data error: {0}")]
    Data(String),
    /// Power iteration did not converge and strict mode is on.
    #[error("non-convergence: {0}")]
    NonConvergence(String),
    /// The command finished and wrote its output, but with warnings.
    #[error("completed with warnings: {0}")]
    Warnings(String),
    #[error(transparent)]
    Runtime(cvnn_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::NonConvergence(_) => 4,
            CliError::Warnings(_) => 5,
        }
    }
}

impl From<cvnn_core::Error> for CliError {
    fn from(e: cvnn_core::Error) -> Self {
        use cvnn_core::Error as E;
        match e {
            E::Io(_)
            | E::IdxMagic { .. }
            | E::IdxTruncated { .. }
            | E::IdxCountMismatch { .. }
            | E::MalformedCheckpoint(_)
            | E::CheckpointShape(_)
            | E::CheckpointVersion { .. }
            | E::MalformedReport(_)
            | E::UndefinedCorrelation(_) => CliError::Data(e.to_string()),
            E::InvalidInput(_) | E::DimensionMismatch(_) | E::MissingDomainBound(_) | E::SnProductOnly(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
