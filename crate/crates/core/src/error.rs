use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("corpus must contain both classes (positives: {positives}, negatives: {negatives})")]
    SingleClass { positives: usize, negatives: usize },

    #[error("exact Shapley enumeration supports at most {max} features, got {features}; use the kernel method")]
    TooManyFeatures { features: usize, max: usize },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("artifact checksum mismatch (stored {stored}, computed {computed})")]
    Checksum { stored: String, computed: String },

    #[error("artifact format version {found} is not supported (this build reads up to version {supported})")]
    Version { found: u32, supported: u32 },

    #[error("malformed artifact: {0}")]
    Artifact(String),

    #[error("generation endpoint failed{}: {message}", status.map(|s| format!(" with status {s}")).unwrap_or_default())]
    Endpoint { status: Option<u16>, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Stable machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::InvalidInput(_) => "invalid_input",
            Error::Parse { .. } => "parse",
            Error::SingleClass { .. } => "single_class",
            Error::TooManyFeatures { .. } => "too_many_features",
            Error::Singular(_) => "singular",
            Error::Divergence { .. } => "divergence",
            Error::Checksum { .. } => "checksum",
            Error::Version { .. } => "version",
            Error::Artifact(_) => "artifact",
            Error::Endpoint { .. } => "endpoint",
            Error::Json(_) => "json",
        }
    }
}
