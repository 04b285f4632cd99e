use std::path::PathBuf;

use dcm_core::DcmError;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Model(#[from] DcmError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Machine-readable error record printed on failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub code: String,
    pub message: String,
    pub location: Option<String>,
    pub exit_code: i32,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Parse { .. } | CliError::Format { .. } => 3,
            CliError::Model(DcmError::Input(_)) => 3,
            CliError::Model(_) => 4,
            CliError::Io { .. } => 5,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let (code, message, location) = match self {
            CliError::Usage(m) => ("usage".to_string(), m.clone(), None),
            CliError::Parse {
                path,
                row,
                column,
                message,
            } => ("parse".into(), message.clone(), Some(format!("{path}:{row}:{column}"))),
            CliError::Format { path, message } => ("parse".into(), message.clone(), Some(path.clone())),
            CliError::Model(e) => (e.code().to_string(), e.to_string(), None),
            CliError::Io { path, source } => ("io".into(), source.to_string(), Some(path.display().to_string())),
        };
        ErrorRecord {
            code,
            message,
            location,
            exit_code: self.exit_code(),
        }
    }
}
