use thiserror::Error;

/// Errors raised by the dichotomy toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("window error: {message}")]
    Window {
        message: String,
        /// Additional window length (seconds or steps) that would make the request valid.
        required_extension: Option<f64>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-hyperbolic: eigenvalue with |Re λ| = {min_abs_real:.3e} below gap tolerance {gap_tol:.1e}")]
    NonHyperbolic { min_abs_real: f64, gap_tol: f64 },

    #[error(
        "contraction margin violated: factor {factor:.6} exceeds limit {limit} \
         (largest admissible perturbation size is {threshold:.6})"
    )]
    ContractionMargin {
        factor: f64,
        limit: f64,
        threshold: f64,
    },

    #[error(
        "robustness hypothesis violated: measured delta {delta:.6} exceeds {limit:.6} \
         (threshold (1-e^-a)/(1+e^-a) = {threshold:.6})"
    )]
    RobustnessHypothesis {
        delta: f64,
        limit: f64,
        threshold: f64,
    },

    #[error("epsilon threshold: {0}")]
    EpsilonThreshold(String),

    #[error("integration error: {0}")]
    Integration(String),

    #[error("isomorphism violation: {0}")]
    Isomorphism(String),

    #[error("misaligned windows: {0}")]
    Misaligned(String),

    #[error("fixed-point iteration did not converge: {0}")]
    NonConvergent(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
