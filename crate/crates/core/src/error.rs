use thiserror::Error;

/// Errors shared by every module. Exit codes follow the CLI contract:
/// configuration-type errors map to 2, numerical non-convergence to 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("validation error: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("non-monotone bracket: {0}")]
    NonMonotone(String),

    /// The pencil has no definite part; carries the diagnostic answer.
    #[error("degenerate configuration: A is singular (lambda = {lambda:e})")]
    Degenerate { lambda: f64, eigvec: Vec<f64> },

    #[error("no convergence after {iterations} iterations: {what}")]
    NonConvergence { what: String, iterations: usize, last_value: f64, last_iterate: Vec<f64>, history: Vec<f64> },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. } | Error::Factorization(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
