use conelab::cone::ConeError;
use conelab::theory::TheoryError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or unparseable input.
    #[error("{0}")]
    Usage(String),
    /// Input parsed but violates a system invariant.
    #[error("invalid theory: {0}")]
    Invalid(String),
    /// Solver or numerical failure.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Invalid(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn from_theory(e: TheoryError) -> Self {
        match &e {
            TheoryError::Cone(ConeError::Solver(_))
            | TheoryError::Cone(ConeError::GeneratorBudget { .. })
            | TheoryError::Cone(ConeError::Unsupported(_)) => CliError::Internal(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        CliError::Internal(e.to_string())
    }
}
