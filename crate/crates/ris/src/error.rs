use thiserror::Error;

/// Errors surfaced by the engine.
///
/// `Config` covers mistakes that should have been caught before a run starts
/// (bad shapes, invalid mazes, malformed config files). `Usage` covers calls
/// that violate an operation's contract at runtime. `NonFinite` aborts a
/// training step that produced NaN/inf so the caller sees diagnostics instead
/// of a silently corrupted run.
#[derive(Debug, Error)]
pub enum RisError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RisError>;
