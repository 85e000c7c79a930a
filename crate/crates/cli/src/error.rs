use std::fmt;

use koopman_uq::{DataError, Error, MetricsError, ModelError, TrainError};

/// Failure of a subcommand, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration.
    Usage(String),
    /// Unreadable, malformed or incompatible inputs.
    Data(String),
    /// Training produced non-finite values.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::Data(d) => d.into(),
            TrainError::Model(ModelError::NonFinite) => CliError::Numeric(e.to_string()),
            TrainError::Config(_) | TrainError::Loss(_) | TrainError::Model(_) => CliError::Usage(e.to_string()),
            TrainError::Diff(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Data(e) => e.into(),
            Error::Train(e) => e.into(),
            Error::Metrics(e) => e.into(),
            Error::Model(e) => e.into(),
            Error::Loss(e) => CliError::Usage(e.to_string()),
            Error::Diff(e) => CliError::Numeric(e.to_string()),
        }
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
