//! File formats, configuration and experiment drivers on top of
//! [`fedsim_core`].

pub mod config;
pub mod figure1;
pub mod runner;
pub mod trace;

pub use config::RunConfig;

use fedsim_core::Error as CoreError;

/// Exit codes: 2 for dataset problems, 3 for invalid configuration, 4 for
/// numerical divergence and 1 for anything else.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("config: {0}")]
    Config(String),
    #[error("diverged: {0}")]
    Diverged(CoreError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Dataset(_) => 2,
            Self::Config(_) => 3,
            Self::Diverged(_) => 4,
            Self::Io(_) | Self::Core(_) => 1,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Diverged { .. } => Self::Diverged(e),
            other => Self::Core(other),
        }
    }
}
