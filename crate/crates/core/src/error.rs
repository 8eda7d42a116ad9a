use thiserror::Error;

use crate::envmodel::ConditionReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid offspring law: {0}")]
    InvalidLaw(String),

    #[error("invalid environment law: {0}")]
    InvalidEnvironment(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("standing conditions violated: {}", .0.summary())]
    ConditionsViolated(ConditionReport),

    #[error("lambda = {lambda} is infeasible: {reason}")]
    InfeasibleLambda { lambda: f64, reason: String },

    #[error("missing Lyapunov estimate for matrix family {0}")]
    MissingEstimate(&'static str),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: u64, residual: f64 },

    #[error("censoring rate {rate:.4} exceeds threshold {threshold:.4}")]
    Censored { rate: f64, threshold: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
