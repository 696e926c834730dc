use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("Monte-Carlo run {run}: {source}")]
    Run {
        run: usize,
        source: selfsync_core::Error,
    },

    #[error(transparent)]
    Core(#[from] selfsync_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status: 1 usage, 2 bad input data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use selfsync_core::Error as E;
        let core = match self {
            Self::Usage(_) => return 1,
            Self::Io { .. } | Self::Parse { .. } => return 2,
            Self::Run { source, .. } | Self::Core(source) => source,
        };
        match core {
            E::InvalidGraph(_)
            | E::InvalidParameter(_)
            | E::CoincidentNodes(..)
            | E::ConnectivityBudgetExhausted { .. }
            | E::Json(_) => 2,
            E::RankDeficient { .. }
            | E::NonFiniteState { .. }
            | E::NoGlobalConsensus(_)
            | E::DegenerateNormalization(_) => 3,
        }
    }
}
