use thiserror::Error;

/// Errors raised across the solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("numerical failure in {what} (achieved error {achieved:e})")]
    Numerical { what: String, achieved: f64 },

    #[error("function returned a non-finite value at x = {location}")]
    Evaluation { location: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("parameter constraint violated: {0}")]
    Param(String),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("boundary classification uncertain on the {side} side: {detail}")]
    ClassificationUncertain { side: String, detail: String },

    #[error("expression error: {0}")]
    Expr(String),

    #[error("path {path} left the numeric range at t = {time}")]
    PathBlowup { path: usize, time: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
