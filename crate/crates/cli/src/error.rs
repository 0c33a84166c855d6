use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("resource cap exceeded: {0}")]
    Cap(String),
    #[error("measurements are not equivalent (max deviation {0:e})")]
    NotEquivalent(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn from_core(context: &str, e: faithsim::Error) -> Self {
        match e {
            faithsim::Error::SizeLimitExceeded { .. } => CliError::Cap(format!("{context}: {e}")),
            other => CliError::Validation(format!("{context}: {other}")),
        }
    }

    /// 0 success, 1 non-equivalence, 2 validation or I/O, 3 resource cap.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NotEquivalent(_) => 1,
            CliError::Cap(_) => 3,
            _ => 2,
        }
    }
}
