use thiserror::Error;

/// Error type shared across the crate.
///
/// Variants map onto the CLI exit codes: spec/config/domain problems exit 2,
/// exceeded resource budgets exit 3, failed validation suites exit 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid block-size spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("resource budget exceeded: {0}")]
    ResourceBudget(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for this error when surfaced by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ResourceBudget(_) => 3,
            _ => 2,
        }
    }
}
