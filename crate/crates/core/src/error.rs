use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A quantity was requested at a point where one of the marginals it
    /// divides by is zero.
    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "integration left the simplex at step {step} (entry {min_entry:e}); try a smaller dt"
    )]
    IntegrationUnstable { step: usize, min_entry: f64 },

    #[error("point is not an equilibrium (max |F| = {residual:e})")]
    NotEquilibrium { residual: f64 },

    #[error("equilibrium criteria disagree: max |F| = {field_residual:e}, max |y - H| = {weight_residual:e}")]
    CriteriaDisagree {
        field_residual: f64,
        weight_residual: f64,
    },

    #[error("eigenvalue solver did not converge on a {0}x{0} block")]
    EigenSolver(usize),

    #[error("strategy pair has an all-zero column; the Nash characterization does not apply")]
    NotCharacterized,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("internal consistency failure: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
