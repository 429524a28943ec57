//! Error type shared across the laboratory.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("evaluation error in {clause}: {detail}")]
    Evaluation { clause: String, detail: String },

    /// A simulated state became non-finite or left the guard box.
    #[error("divergence: player {player} at step {step} ({detail})")]
    Divergence {
        player: usize,
        step: usize,
        detail: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("dependency error: {0}")]
    Dependency(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    /// Process exit status for the CLI: configuration problems exit 2,
    /// everything else that reaches the top level exits 2 as well unless it
    /// is an explicit criterion failure (handled by the runners, exit 1).
    pub fn exit_code(&self) -> i32 {
        2
    }
}
