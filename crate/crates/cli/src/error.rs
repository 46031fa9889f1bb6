use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(clap::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{command}: missing required keys: {}", keys.join(", "))]
    MissingKeys { command: String, keys: Vec<String> },

    #[error("cannot read {}: {source}", path.display())]
    Input {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot parse {}: {message}", path.display())]
    BadInput { path: PathBuf, message: String },

    #[error("{} already exists; pass --force to overwrite", .0.display())]
    Collision(PathBuf),

    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] sigdyn::Error),
}

impl CliError {
    /// 2 for anything the user can fix in the configuration or inputs,
    /// 1 for failures during the run itself.
    pub fn exit_code(&self) -> u8 {
        use sigdyn::Error as E;
        match self {
            CliError::Usage(e) if !e.use_stderr() => 0,
            CliError::Output { .. } => 1,
            CliError::Core(E::InvalidConfig(_) | E::InvalidInput(_) | E::DimensionMismatch(_)) => 2,
            CliError::Core(_) => 1,
            _ => 2,
        }
    }
}
