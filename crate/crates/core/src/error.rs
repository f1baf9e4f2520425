use std::path::PathBuf;

/// Errors surfaced by every stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes, dimensions or settings that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// A configuration field failed validation.
    #[error("invalid value for `{field}`: {reason}")]
    ConfigField { field: String, reason: String },

    /// Input data violates a precondition (non-finite values, bad labels, misaligned rows).
    #[error("data error: {0}")]
    Data(String),

    /// A loss or gradient became non-finite during training.
    #[error("training diverged: {0}")]
    Divergence(String),

    /// Malformed file contents.
    #[error("parse error at {location}: {reason}")]
    Parse { location: String, reason: String },

    /// An expected run artifact is absent.
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    /// Refusing to overwrite an existing artifact.
    #[error("refusing to overwrite {} (pass --force)", .0.display())]
    WouldOverwrite(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigField {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(location: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
