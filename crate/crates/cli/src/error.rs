use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Malformed or invalid input at a known line.
    #[error("{path}:{line}: {msg}")]
    Line {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{0}")]
    Validation(String),
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] bsc_core::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 1 for anything wrong with the inputs, 2 for failures during compute
    /// or output.
    pub fn exit_code(&self) -> u8 {
        use bsc_core::Error as E;
        match self {
            CliError::Line { .. } | CliError::Validation(_) | CliError::Read { .. } => 1,
            CliError::Core(E::InvalidConfig { .. } | E::Contract(_) | E::Checkpoint(_)) => 1,
            CliError::Core(_) | CliError::Write { .. } | CliError::Runtime(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
