use epi_core::io::IoError;
use epi_fsnet::FsnetError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    MissingFile(String),
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
}

/// Machine-readable error written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorReport<'a> {
    pub error: &'a str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::MissingFile(_) => 3,
            CliError::Schema(_) => 4,
            CliError::Input(_) => 5,
            CliError::Numeric(_) => 6,
            CliError::Io(_) => 7,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::MissingFile(_) => "missing_file",
            CliError::Schema(_) => "schema_mismatch",
            CliError::Input(_) => "invalid_input",
            CliError::Numeric(_) => "numeric_failure",
            CliError::Io(_) => "io",
        }
    }

    pub fn report(&self) -> ErrorReport<'static> {
        ErrorReport {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Open { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingFile(e.to_string())
            }
            IoError::Schema { .. } => CliError::Schema(e.to_string()),
            IoError::Parse { .. } | IoError::Json(_) => CliError::Input(e.to_string()),
            IoError::Open { .. } | IoError::Io(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<epi_core::Error> for CliError {
    fn from(e: epi_core::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<FsnetError> for CliError {
    fn from(e: FsnetError) -> Self {
        match e {
            FsnetError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            FsnetError::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => CliError::MissingFile(e.to_string()),
            FsnetError::Io(_) => CliError::Io(e.to_string()),
            FsnetError::Format(ref m) if m.contains("version") || m.contains("magic") => CliError::Schema(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingFile(e.to_string())
        } else {
            CliError::Io(e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
