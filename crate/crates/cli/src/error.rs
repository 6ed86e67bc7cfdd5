use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] listrep::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("verification failed: {failed} of {total} checks reported violations")]
    Verification { failed: usize, total: usize },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 2 for validation, 3 for budget, 4 for a failed
    /// verification, 1 for I/O trouble.
    pub fn exit_code(&self) -> u8 {
        use listrep::Error as E;
        match self {
            CliError::Lib(E::BudgetExceeded { .. } | E::InstanceTooLarge { .. }) => 3,
            CliError::Lib(E::Io(_)) | CliError::Io { .. } => 1,
            CliError::Lib(_) | CliError::Config(_) => 2,
            CliError::Verification { .. } => 4,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
