use thiserror::Error;

/// Errors raised by the analytic model, the optimizers and scenario handling.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine failed to reach its tolerance.
    #[error("numerical failure: {message} (best estimate {estimate:e})")]
    Numerical { message: String, estimate: f64 },

    /// The traffic load cannot be served by any threshold (lambda * T_slt >= 1).
    #[error("infeasible traffic: lambda * T_slt = {load} >= 1, no threshold keeps the queue stable")]
    InfeasibleTraffic { load: f64 },

    /// A scenario or argument failed validation.
    #[error("validation error: {0}")]
    Validation(String),

    /// The scenario file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Process exit code used by the CLI: 2 for input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical { .. } => 3,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
