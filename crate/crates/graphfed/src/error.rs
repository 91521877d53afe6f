use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad caller-supplied data (vertex ids out of range, bad fractions, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Inconsistent or degenerate configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Matrix/tensor dimension disagreement.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Malformed file contents (edge lists, CSVs, binary headers).
    #[error("format error: {0}")]
    Format(String),

    /// Wire-protocol violation (bad magic, unknown kind, epoch mismatch, ...).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A worker aborted the distributed run.
    #[error("worker {worker_id} failed: {message}")]
    Worker { worker_id: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
