//! Phase-coherent resonator detection of two-mode spectral sideband states.
//!
//! The crate models the full measurement chain of resonator detection (RD):
//! a local oscillator plus its two sideband modes at `ω₀ ± Ω` reflect off a
//! scanned optical resonator, and the demodulated photocurrent components
//! `J_cos`/`J_sin` are recorded as the detuning is swept. The modules map the
//! chain end to end:
//!
//! - [`transfer`]: complex reflection/transmission of the resonator, sideband
//!   transformation coefficients, and the mode-mismatch correction.
//! - [`gaussian`]: two-mode Gaussian states of the sideband pair, with exact
//!   changes between the spectral and symmetric/antisymmetric bases.
//! - [`measurement`]: the RD observables as linear forms in the four
//!   quadratures plus their vacuum noise block, and predicted photocurrent
//!   moments for any Gaussian input.
//! - [`scan`]: Monte Carlo generation of a full resonator scan and the
//!   binning pipeline that turns raw samples into moment curves.
//! - [`estimator`]: DC-profile calibration and weighted least-squares
//!   recovery of the 4 means and 10 covariances, with identifiability
//!   diagnostics.
//!
//! Quadratures use the `[p, q] = 2i` normalization so the vacuum variance is
//! exactly 1 and noise reads directly in units of shot noise.

pub mod error;
pub mod estimator;
pub mod gaussian;
pub mod measurement;
pub mod scan;
pub mod transfer;

pub use error::{Error, Result};
pub use gaussian::{Basis, PhaseModSpec, TwoModeGaussian};
pub use measurement::{CoefficientSet, PredictedMoments};
pub use scan::{MomentCurves, ScanConfig, ScanRecord};
pub use transfer::ResonatorParams;
