use thiserror::Error;

/// Crate-wide error type.
///
/// The split between `HypothesisViolated` and everything else matters to the
/// experiment runner: hypothesis violations refuse to run (distinct exit
/// code), while measured-bound violations are recorded as findings and never
/// surface as errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("standing hypothesis violated: nu_plus = {nu_plus:.6e} >= 2*sigma = {two_sigma:.6e}")]
    HypothesisViolated { nu_plus: f64, two_sigma: f64 },

    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    #[error(
        "eigen iteration did not converge within {iterations} iterations (residual {residual:.3e})"
    )]
    Convergence { iterations: usize, residual: f64 },

    #[error("linear solve failed after {iterations} iterations (residual {residual:.3e}): {reason}")]
    Solve {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
