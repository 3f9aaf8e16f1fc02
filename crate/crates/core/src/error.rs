use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("state has nonzero mean ({0}, {1}); the fidelity formula assumes a centered state")]
    NonZeroMean(f64, f64),

    #[error("mass conservation violated: total mass {total} after step {step}")]
    MassConservation { total: f64, step: usize },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("eigenvalue degeneracy: lambda_{n} and lambda_{m} differ by {gap:e}")]
    Degenerate { n: usize, m: usize, gap: f64 },

    #[error("insufficient dynamic range: {0}")]
    InsufficientRange(String),

    #[error("no interior maximum in the variance profile (argmax at p = {p})")]
    NoInteriorMaximum { p: f64 },

    #[error("outside the model's domain: {0}")]
    OutOfDomain(String),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
