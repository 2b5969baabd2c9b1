use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Model(#[from] qlattice::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Exit codes of the binary.
pub mod exit {
    pub const OK: u8 = 0;
    pub const VALIDATION_FAILED: u8 = 1;
    pub const USAGE: u8 = 2;
}
