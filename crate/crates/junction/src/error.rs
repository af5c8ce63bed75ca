use std::path::PathBuf;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: cannot parse `{field}`: {message}")]
    Parse { path: PathBuf, field: String, message: String },

    #[error("{path}: invalid value for `{field}`: {reason}")]
    Invalid { path: PathBuf, field: String, reason: String },

    #[error("no run metrics found in {0}")]
    EmptyBatch(PathBuf),

    #[error(transparent)]
    Core(#[from] junction_core::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Machine-readable form printed on stderr by the binary.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub message: String,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Invalid { .. } => "invalid_config",
            Error::EmptyBatch(_) => "empty_batch",
            Error::Core(e) => match e {
                junction_core::Error::Infeasible(_) => "infeasible",
                junction_core::Error::InvalidConfig { .. } => "invalid_config",
                _ => "contract_violation",
            },
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            Error::Parse { field, .. } | Error::Invalid { field, .. } => Some(field),
            Error::Core(junction_core::Error::InvalidConfig { field, .. }) => Some(field),
            _ => None,
        }
    }

    pub fn report(&self) -> ErrorReport {
        let path = match self {
            Error::Io { path, .. } | Error::Parse { path, .. } | Error::Invalid { path, .. } => Some(path.clone()),
            Error::EmptyBatch(p) => Some(p.clone()),
            _ => None,
        };
        ErrorReport {
            error: self.kind(),
            field: self.field().map(str::to_owned),
            path,
            message: self.to_string(),
        }
    }
}
