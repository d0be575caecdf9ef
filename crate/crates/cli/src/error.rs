use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] momentrate::Error),

    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad configuration: {0}")]
    Config(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for usage errors, 3 for domain errors, 4 for numeric failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Core(e) if e.is_numeric() => 4,
            CliError::Core(_) | CliError::Io(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
