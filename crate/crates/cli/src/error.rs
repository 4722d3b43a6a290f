use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Core(#[from] loopdet::Error),

    #[error("rank-deficient response matrix: {0}")]
    RankDeficient(String),
}

impl CliError {
    /// Process exit code: 1 for usage, config and I/O problems, 2 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(loopdet::Error::InvalidArgument(_)) => 1,
            CliError::Core(_) | CliError::RankDeficient(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
