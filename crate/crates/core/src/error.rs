use thiserror::Error;

use crate::solvers::SolveReport;

pub type Result<T> = std::result::Result<T, KwcError>;

#[derive(Debug, Clone, Error)]
pub enum KwcError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("solver failure in {stage}: {message} (iterations {}, residual {:.3e})", report.iterations, report.final_residual_norm)]
    SolverFailure {
        stage: &'static str,
        message: String,
        report: SolveReport,
    },

    #[error("non-finite value encountered in {0}")]
    Numerical(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for KwcError {
    fn from(e: std::io::Error) -> Self {
        KwcError::Io(e.to_string())
    }
}
