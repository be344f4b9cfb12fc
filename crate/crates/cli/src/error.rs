//! CLI error type with the process exit-code contract:
//! 0 all checks pass, 1 check failure or irreproducible replay,
//! 2 solver divergence (best iterate saved), 3 invalid configuration.

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] pharm_core::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("artifacts differ from the recorded run: {file} (first differing row {row})")]
    NonReproducible { file: String, row: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Core(pharm_core::Error::SolveDiverged(_)) => 2,
            CliError::NonReproducible { .. } => 1,
            _ => 1,
        }
    }
}
