use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("missing input: {0}")]
    MissingData(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] plasticity_core::Error),
}

impl LabError {
    /// Process exit status: 2 for configuration problems, 3 for missing inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config { .. } | LabError::Invalid(_) => 2,
            LabError::MissingData(_) => 3,
            _ => 1,
        }
    }
}

pub type LabResult<T> = std::result::Result<T, LabError>;
