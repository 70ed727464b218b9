//! Shared error type for the workspace.

/// Workspace-wide error classification. The CLI maps variants onto exit codes,
/// so new failure modes should pick the variant that matches their cause.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or incompatible shapes/sizes requested by the caller.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical operation produced non-finite values or failed to converge.
    #[error("numerical divergence: {0}")]
    Divergence(String),
    /// A file had the wrong magic, version, or internal structure.
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn divergence(msg: impl Into<String>) -> Self {
        Error::Divergence(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
