use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numeric(#[from] phyfusion_core::Error),

    #[error("numerical failure at lambda = {lambda}: {source}")]
    Solver {
        lambda: f64,
        #[source]
        source: phyfusion_core::Error,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl AppError {
    /// Process exit status: 2 for configuration errors, 3 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numeric(_) | AppError::Solver { .. } => 3,
            AppError::Io(_) => 1,
        }
    }
}
