use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Core(#[from] scmc_core::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for data problems,
    /// 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        use scmc_core::Error as Core;
        match self {
            Self::Config(_) => 2,
            Self::Data(_) | Self::Io(_) => 3,
            Self::Numerical(_) => 4,
            Self::Core(core) => match core {
                Core::Config(_) => 2,
                Core::Numerical(_) | Core::DegenerateWeights(_) => 4,
                _ => 3,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
