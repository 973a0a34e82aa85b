use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain of an operation (non-positive speed, bad dimension, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Vehicle or controller parameters violate their invariants.
    #[error("invalid parameters: {0}")]
    Parameter(String),

    /// Degenerate or ill-conditioned polytope geometry.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Gain synthesis or certificate verification did not succeed.
    #[error("synthesis failed: {message} (worst margin {worst_margin:.3e})")]
    Synthesis { message: String, worst_margin: f64 },

    /// Integration produced non-finite values.
    #[error("numerical divergence at t = {last_good_time:.3} s: {message}")]
    Numerical { message: String, last_good_time: f64 },

    /// Artifacts built from different reductions/polytopes were mixed.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Synthesis { .. } => 3,
            Error::Numerical { .. } => 4,
            _ => 2,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
