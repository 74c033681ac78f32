use thiserror::Error;

use crate::model::ProfileState;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular state: r = {r} is not positive")]
    Singularity { r: f64 },

    #[error("value {value} outside the domain {domain}")]
    Domain { value: f64, domain: String },

    #[error("step size underflow at s = {}", last.s)]
    StepUnderflow { last: ProfileState },

    #[error("inconsistent event ordering: {0}")]
    EventOrder(String),

    #[error("no curve of the target class found: {0}")]
    NotFound(String),

    #[error("bisection did not converge: {0}")]
    NonConvergence(String),

    #[error("rejected input: {0}")]
    Rejected(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
