use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] morphevo::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(context: impl std::fmt::Display, source: std::io::Error) -> Self {
        Self::Io {
            context: context.to_string(),
            source,
        }
    }

    /// 2 for bad configuration or input, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Input(_) => 2,
            Self::Io { .. } | Self::Core(_) | Self::Runtime(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
