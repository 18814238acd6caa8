//! Error type shared by all modules.

/// Errors raised by geometry construction, operator assembly and the solver.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    /// A parameter failed validation; `field` names the offending quantity.
    #[error("invalid argument `{field}`: {reason}")]
    InvalidArgument { field: &'static str, reason: String },

    /// Coincident or near-coincident points where a field diverges.
    #[error("singular geometry: {0}")]
    Singularity(String),

    /// The coupling operator `(I - D(m) Ξ)` is too close to singular: the
    /// estimated spectral radius of `D(m) Ξ` exceeds `1 - margin`.
    #[error(
        "ill-conditioned coupling: spectral radius estimate {rho:.6} exceeds limit {limit:.6}"
    )]
    IllConditionedCoupling { rho: f64, limit: f64 },

    /// Effective channel matrix is (numerically) rank deficient, so a
    /// zero-forcing design does not exist for this draw.
    #[error("rank-deficient effective channel: {0}")]
    RankDeficient(String),

    /// A numerical routine failed to converge or produced a non-finite value.
    #[error("numeric failure: {0}")]
    NumericFailure(String),
}

impl CoreError {
    /// Convenience constructor for [`CoreError::InvalidArgument`].
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        CoreError::InvalidArgument {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
