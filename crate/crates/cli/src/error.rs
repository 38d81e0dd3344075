//! CLI error classes mapped to process exit codes: 2 for configuration
//! problems, 3 for data problems, 4 for numerical failures.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Data(_) => 3,
            AppError::Numerical(_) => 4,
        }
    }
}

impl From<glmfunk::GraphError> for AppError {
    fn from(e: glmfunk::GraphError) -> Self {
        match e {
            glmfunk::GraphError::Parse { .. } => AppError::Data(e.to_string()),
            glmfunk::GraphError::SolveFailed => AppError::Numerical(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<glmfunk::FamilyError> for AppError {
    fn from(e: glmfunk::FamilyError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<glmfunk::SolverError> for AppError {
    fn from(e: glmfunk::SolverError) -> Self {
        match e {
            glmfunk::SolverError::InvalidHyperparams(_)
            | glmfunk::SolverError::FusionMismatch { .. } => AppError::Config(e.to_string()),
            glmfunk::SolverError::Dimension(_) => AppError::Data(e.to_string()),
            glmfunk::SolverError::Family(fe) => AppError::Data(fe.to_string()),
            glmfunk::SolverError::NonFinite { .. } => AppError::Numerical(e.to_string()),
        }
    }
}

impl From<glmfunk::TuneError> for AppError {
    fn from(e: glmfunk::TuneError) -> Self {
        match e {
            glmfunk::TuneError::EmptyGrid(_) | glmfunk::TuneError::BadGrid(_) => {
                AppError::Config(e.to_string())
            }
            glmfunk::TuneError::Solver(se) => se.into(),
            glmfunk::TuneError::Graph(ge) => ge.into(),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<glmfunk::InferError> for AppError {
    fn from(e: glmfunk::InferError) -> Self {
        match e {
            glmfunk::InferError::BadLevel(_) => AppError::Config(e.to_string()),
            glmfunk::InferError::Dimension(_) => AppError::Data(e.to_string()),
            glmfunk::InferError::Family(fe) => AppError::Data(fe.to_string()),
            glmfunk::InferError::Solver(se) => se.into(),
            _ => AppError::Numerical(e.to_string()),
        }
    }
}

impl From<glmfunk::SimError> for AppError {
    fn from(e: glmfunk::SimError) -> Self {
        match e {
            glmfunk::SimError::PoissonOverflow { .. } => AppError::Numerical(e.to_string()),
            glmfunk::SimError::Graph(ge) => ge.into(),
            _ => AppError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::Config(e.to_string())
    }
}
