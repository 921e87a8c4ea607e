use std::fmt;

use atnaudit_core::audit::AuditError;
use atnaudit_core::corpus::CorpusError;
use atnaudit_core::metrics::MetricsError;
use atnaudit_core::model::ModelError;
use atnaudit_core::trainer::TrainError;

/// CLI failure classes, one per exit code:
/// 1 validation/config, 2 I/O, 3 numeric abort.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> CliError {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(msg) | CliError::Io(msg) | CliError::Numeric(msg) => {
                f.write_str(msg)
            }
        }
    }
}

impl std::error::Error for CliError {}

// OS-level failures exit 2; content-level problems (parse errors, corrupt
// files, mismatched shapes) are input validation and exit 1; non-finite
// training aborts exit 3.

impl From<CorpusError> for CliError {
    fn from(err: CorpusError) -> Self {
        match err {
            CorpusError::Io { .. } => CliError::Io(err.to_string()),
            _ => CliError::Validation(err.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(err: ModelError) -> Self {
        CliError::Validation(err.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(err: MetricsError) -> Self {
        CliError::Validation(err.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(err: TrainError) -> Self {
        match err {
            TrainError::Io { .. } => CliError::Io(err.to_string()),
            TrainError::Aborted { .. } | TrainError::NonFiniteGradient { .. } => {
                CliError::Numeric(err.to_string())
            }
            TrainError::Metrics(inner) => CliError::from(inner),
            TrainError::Model(inner) => CliError::from(inner),
            _ => CliError::Validation(err.to_string()),
        }
    }
}

impl From<AuditError> for CliError {
    fn from(err: AuditError) -> Self {
        match err {
            AuditError::Train(inner) => CliError::from(inner),
            AuditError::Model(inner) => CliError::from(inner),
            AuditError::Metrics(inner) => CliError::from(inner),
            _ => CliError::Validation(err.to_string()),
        }
    }
}
