use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("domain violation in {op}: argument {arg}")]
    Domain { op: &'static str, arg: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("stability violation: {0}")]
    StabilityViolation(String),

    #[error("regularity violation: {0}")]
    Regularity(String),

    #[error("singular symplectic form: {0}")]
    SingularForm(String),

    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("period collapse: tau = {0:e}")]
    PeriodCollapse(f64),

    #[error("residual check failed: {0}")]
    Residual(String),

    #[error("separation error: {0}")]
    Separation(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
