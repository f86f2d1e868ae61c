use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("measure has zero-weight cells inside its support: {cells:?}")]
    InteriorZeros { cells: Vec<usize> },

    #[error("sinkhorn did not reach tolerance after {iterations} iterations (marginal error {marginal_error:e})")]
    NotConverged {
        iterations: usize,
        marginal_error: f64,
    },

    #[error("instance of {size} entries exceeds budget {budget}")]
    BudgetExceeded { size: usize, budget: usize },

    #[error("{0}")]
    WrongSolver(String),

    #[error("cross-derivative is singular at {point:?}")]
    SingularCrossDerivative { point: Vec<f64> },

    #[error("potentials infeasible: min duality gap {min_gap:e} at pair ({row}, {col})")]
    InfeasiblePotentials {
        min_gap: f64,
        row: usize,
        col: usize,
    },

    #[error("tau({r}) = {tau} exceeds 1/2; try a smaller radius")]
    RadiusTooLarge { r: f64, tau: f64 },

    #[error(
        "contact set leaks outside the charts (duality gap vanishes at an uncovered node pair)"
    )]
    ContactLeak,

    #[error("all sweep points failed: {0}")]
    SweepFailed(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
