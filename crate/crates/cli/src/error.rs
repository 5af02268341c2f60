use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("`{field}` = {value} is outside its legal range {legal}")]
    Range {
        field: &'static str,
        value: String,
        legal: &'static str,
    },

    #[error("unknown experiment `{0}` (see --list-experiments)")]
    UnknownExperiment(String),

    #[error("unknown coefficient preset `{0}` (expected pure_noise, ou_type or bounded_smooth)")]
    UnknownPreset(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("numerical error: {0}")]
    Numerics(#[from] stablesde::Error),

    #[error("acceptance checks failed: {}", .0.join("; "))]
    Acceptance(Vec<String>),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("could not start worker pool: {0}")]
    Pool(String),
}

impl RunError {
    /// 2 config, 3 numerical or acceptance failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerics(_) | RunError::Acceptance(_) => 3,
            RunError::Io { .. } | RunError::Pool(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Numerics(_) => "numerics",
            RunError::Acceptance(_) => "acceptance",
            RunError::Io { .. } => "io",
            RunError::Pool(_) => "pool",
        }
    }

    /// Machine-readable failure record.
    pub fn record(&self) -> FailureRecord {
        FailureRecord {
            status: "error",
            kind: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureRecord {
    pub status: &'static str,
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
}
