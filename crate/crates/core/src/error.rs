use thiserror::Error;

/// Errors raised across the crate.
///
/// Variants are grouped by how a caller is expected to react: bad input is
/// a caller bug, numerical failures may succeed with different settings.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{what} did not converge (residual {residual:.3e})")]
    NonConvergence { what: &'static str, residual: f64 },

    #[error("singular system in {0}")]
    Singular(&'static str),

    #[error(
        "quadrature did not reach tolerance (error estimate {estimate:.3e}, value {value:.3e})"
    )]
    Quadrature { value: f64, estimate: f64 },

    #[error("no bracket found for {0}")]
    NoBracket(String),

    #[error("insufficient decay: {0}")]
    InsufficientDecay(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True when the failure is a numerical one (non-convergence, singular
    /// systems, missing brackets) rather than bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Singular(_)
                | Error::Quadrature { .. }
                | Error::NoBracket(_)
                | Error::InsufficientDecay(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
