use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong while evaluating, simulating or verifying.
///
/// The variants split into input problems ([`Error::Domain`],
/// [`Error::Precondition`]), numerical failures (truncation, domination,
/// reach, quadrature, normalization) and failed checks
/// ([`Error::InvariantViolation`]). [`Error::is_numerical`] tells them apart.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("series truncation failed after {terms} terms: {detail}")]
    Truncation { terms: usize, detail: String },

    #[error(
        "thinning domination breached at t={time}: intensity {intensity} > bound {bound}; \
         use a smaller slice length or a larger safety factor"
    )]
    Domination {
        time: f64,
        intensity: f64,
        bound: f64,
    },

    #[error("simulated state {state} exceeded the reach bound {k_reach}")]
    Reach { state: usize, k_reach: usize },

    #[error("adaptive quadrature did not converge on [{a}, {b}] within depth {max_depth}")]
    Quadrature { a: f64, b: f64, max_depth: u32 },

    #[error("marginal weights at t={time} sum to {sum}, expected 1")]
    Normalization { time: f64, sum: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invariant violated: {name}: {detail}")]
    InvariantViolation { name: String, detail: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Truncation { .. }
                | Error::Domination { .. }
                | Error::Reach { .. }
                | Error::Quadrature { .. }
                | Error::Normalization { .. }
        )
    }
}
