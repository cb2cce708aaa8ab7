use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field grids do not match")]
    GridMismatch,
    #[error("exponent {0} is below 1")]
    BadExponent(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("window of length {window} cannot resolve modulation {d}")]
    UnresolvedModulation { window: f64, d: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("nonpositive value {0} in log-log fit")]
    NonPositive(f64),
    #[error("spherical harmonic degree {l} exceeds basis maximum {max}")]
    DegreeOutOfRange { l: usize, max: usize },
    #[error("time derivative frames are required for Q0")]
    MissingTimeDerivative,
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
