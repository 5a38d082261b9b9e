//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar input is outside its physical domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A covariance matrix violates the Heisenberg bound; carries the
    /// smallest symplectic eigenvalue (admissible states have all ≥ 1).
    #[error("inadmissible state: smallest symplectic eigenvalue {0} < 1")]
    InadmissibleState(f64),

    /// The reflected LO power vanishes at this detuning, so SQL-normalized
    /// quantities are undefined.
    #[error("standard quantum level vanishes at detuning {0}")]
    VanishingSql(f64),

    /// Scan or run configuration is inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The DC calibration could not lock onto a resonance dip.
    #[error("calibration failure: {0}")]
    CalibrationFailure(String),

    /// The fitted moments are incompatible with the measurement model.
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
