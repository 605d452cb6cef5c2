use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong, split into input validation and numerical failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("supersonic or sonic mean flow: u0 = {u0} >= c0 = {c0}; the solver needs M0 < 1")]
    NonSubsonic { u0: f64, c0: f64 },

    #[error("Re(Z) = {re} must be positive (passive liner)")]
    NonPassiveImpedance { re: f64 },

    #[error("|beta_v| = {modulus} >= 1; well-posedness needs |beta_v| < 1")]
    BetaOutsideDisc { modulus: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid liner density: {0}")]
    InvalidDensity(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unknown facet id {0}")]
    UnknownFacet(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sparse LU failed: {message} (diagonal-ratio condition estimate {condition_estimate:.3e})")]
    Factorization {
        message: String,
        condition_estimate: f64,
    },

    #[error("relative residual {residual:.3e} above tolerance {tolerance:.1e} after refinement")]
    Residual { residual: f64, tolerance: f64 },

    #[error("solve failed at k0 = {k0}: {source}")]
    AtWavenumber {
        k0: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Factorization { .. } | Error::Residual { .. } => true,
            Error::AtWavenumber { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
