use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EqlError {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unbound variable `{0}`")]
    UnboundVariable(String),

    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("non-finite loss in {phase} at epoch {epoch}, batch {batch}")]
    NonFinite {
        phase: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("training diverged in {phase} at epoch {epoch}, batch {batch}: loss {loss:e} exceeds {limit:e}")]
    Diverged {
        phase: &'static str,
        epoch: usize,
        batch: usize,
        loss: f64,
        limit: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl EqlError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EqlError::Io {
            path: path.into(),
            source,
        }
    }

    /// Training blew up numerically (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, EqlError::NonFinite { .. } | EqlError::Diverged { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EqlError::Contract(_) => "contract",
            EqlError::Config(_) => "config",
            EqlError::Dimension { .. } => "dimension",
            EqlError::UnboundVariable(_) => "unbound_variable",
            EqlError::Syntax { .. } => "syntax",
            EqlError::UnknownFunction { .. } => "unknown_function",
            EqlError::Data(_) => "data",
            EqlError::Checkpoint(_) => "checkpoint",
            EqlError::NonFinite { .. } => "non_finite",
            EqlError::Diverged { .. } => "diverged",
            EqlError::Io { .. } => "io",
            EqlError::Json(_) => "json",
            EqlError::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = EqlError> = std::result::Result<T, E>;
