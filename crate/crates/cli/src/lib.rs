//! Experiment harness around `opidmd_core`: declarative configs, data
//! generation, method fitting, modal prediction and comparison reports.

pub mod commands;
pub mod config;
pub mod data;
pub mod methods;
pub mod report;
pub mod run;

use opidmd_core::Error as CoreError;

/// Failure classes that map onto process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, arguments or files (exit code 2).
    #[error("{0}")]
    Config(String),
    /// Numerical failure while fitting or predicting (exit code 3).
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::SeriesTooShort { .. }
            | CoreError::ShapeMismatch { .. }
            | CoreError::SplitOutOfRange { .. }
            | CoreError::NonFinite { .. }
            | CoreError::InvalidParameter(_)
            | CoreError::Io { .. }
            | CoreError::Parse { .. }
            | CoreError::CflViolated { .. }
            | CoreError::StabilityViolated { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

pub(crate) fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}
