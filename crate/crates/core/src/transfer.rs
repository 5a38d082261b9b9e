//! Closed-form transfer functions of the detection resonator.
//!
//! The resonator is a high-finesse Lorentzian resonance described by the
//! impedance matching parameter `d` (intensity reflectance at exact
//! resonance). All detunings are dimensionless, in units of the resonance
//! half-bandwidth. The reflection amplitude is
//!
//! ```text
//! r(Δ) = −(√d + iΔ) / (1 − iΔ) = √(1 − T(Δ)) · exp(iΨ(Δ))
//! ```
//!
//! with intensity transmission `T(Δ) = (1 − d)/(1 + Δ²)`. The phase `Ψ` is
//! computed as the argument of `r` with a continuous branch anchored at
//! `Ψ(+∞) = 0`, unwrapped toward negative detuning; all downstream math uses
//! the complex `r` directly, so the branch choice only affects reported
//! phase values.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

/// Physical description of the detection resonator and its mode matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    /// Impedance matching parameter: fraction of light intensity reflected
    /// at exact resonance. `d = 0` is fully transmitting, `d = 1` lossless.
    pub d: f64,
    /// Sideband offset in half-bandwidth units, Ω/γ.
    pub omega_ratio: f64,
    /// Fraction of optical power in the spatially mismatched mode, f².
    pub f2: f64,
}

/// One coefficient per sideband: `plus` belongs to the upper sideband at
/// `ω₀ + Ω`, `minus` to the lower sideband at `ω₀ − Ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidebandPair {
    pub plus: Complex64,
    pub minus: Complex64,
}

/// Pointwise transfer data for one grid sample, as emitted in coefficient
/// curves. `singular` marks the `d = 0`, `Δ = 0` point where `r` vanishes
/// and the phase is defined only as a one-sided limit.
#[derive(Debug, Clone, Copy)]
pub struct TransferSample {
    pub delta: f64,
    pub r: Complex64,
    pub transmission: f64,
    pub psi: f64,
    pub singular: bool,
}

fn check_delta(delta: f64) -> Result<()> {
    if !delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "detuning must be finite, got {delta}"
        )));
    }
    Ok(())
}

fn check_d(d: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&d) || !d.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "impedance matching parameter must lie in [0, 1], got {d}"
        )));
    }
    Ok(())
}

/// Complex reflection amplitude `r(Δ) = −(√d + iΔ)/(1 − iΔ)`.
pub fn reflection(delta: f64, d: f64) -> Result<Complex64> {
    check_delta(delta)?;
    check_d(d)?;
    let num = -Complex64::new(d.sqrt(), delta);
    let den = Complex64::new(1.0, -delta);
    Ok(num / den)
}

/// Intensity transmission `T(Δ) = (1 − d)/(1 + Δ²)`, in `[0, 1 − d]`.
pub fn transmission(delta: f64, d: f64) -> Result<f64> {
    check_delta(delta)?;
    check_d(d)?;
    Ok((1.0 - d) / (1.0 + delta * delta))
}

/// Reflection phase `Ψ(Δ) = arg r(Δ)` on the continuous branch anchored at
/// `Ψ(+∞) = 0` and unwrapped toward negative detuning, so `Ψ ∈ (−2π, 0)`.
///
/// At the singular point `d = 0`, `Δ = 0` the reflection vanishes and the
/// one-sided limit from positive detuning (−π/2) is returned; grid
/// evaluation via [`transfer_curve`] flags that sample.
pub fn phase_psi(delta: f64, d: f64) -> Result<f64> {
    check_delta(delta)?;
    check_d(d)?;
    if d == 0.0 && delta == 0.0 {
        return Ok(-FRAC_PI_2);
    }
    // arg r = π + arg(√d + iΔ) − arg(1 − iΔ), shifted by −2π to anchor the
    // branch at Ψ(+∞) = 0.
    Ok(delta.atan2(d.sqrt()) + delta.atan() - PI)
}

/// Evaluate `r`, `T`, and the continuous-branch phase along a detuning
/// grid.
///
/// The phase column carries the same branch as [`phase_psi`], which is the
/// continuum limit of minimal-jump unwrapping from the far-detuned anchor;
/// evaluating it pointwise keeps coarse grids free of unwrap aliasing near
/// resonance, where the phase can swing by more than π between neighboring
/// samples. Vanishing-reflection samples (`d = 0`, `Δ = 0`) carry the
/// one-sided limit −π/2 and are flagged `singular`.
pub fn transfer_curve(deltas: &[f64], d: f64) -> Result<Vec<TransferSample>> {
    check_d(d)?;
    deltas
        .iter()
        .map(|&delta| {
            let r = reflection(delta, d)?;
            Ok(TransferSample {
                delta,
                r,
                transmission: transmission(delta, d)?,
                psi: phase_psi(delta, d)?,
                singular: r.norm() == 0.0,
            })
        })
        .collect()
}

impl ResonatorParams {
    pub fn new(d: f64, omega_ratio: f64, f2: f64) -> Result<Self> {
        let params = Self { d, omega_ratio, f2 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_d(self.d)?;
        if !(self.omega_ratio > 0.0) || !self.omega_ratio.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sideband offset Ω/γ must be positive, got {}",
                self.omega_ratio
            )));
        }
        if !(0.0..1.0).contains(&self.f2) {
            return Err(Error::InvalidParameter(format!(
                "mode mismatch fraction f² must lie in [0, 1), got {}",
                self.f2
            )));
        }
        Ok(())
    }

    /// Sideband transformation coefficients
    /// `R_{±Ω}(Δ) = exp(iΨ(Δ)) · r*(Δ ± Ω/γ)`.
    ///
    /// Their moduli satisfy `|R_{±Ω}|² = 1 − T(Δ ± Ω/γ)`.
    pub fn sideband_coeffs(&self, delta: f64) -> Result<SidebandPair> {
        let lo_phase = Complex64::from_polar(1.0, phase_psi(delta, self.d)?);
        let up = reflection(delta + self.omega_ratio, self.d)?.conj();
        let lo = reflection(delta - self.omega_ratio, self.d)?.conj();
        Ok(SidebandPair {
            plus: lo_phase * up,
            minus: lo_phase * lo,
        })
    }

    /// Effective coefficients including mode mismatch,
    /// `G_{±Ω}(Δ) = (1 − f²)·|r(Δ)|·R_{±Ω}(Δ) + f²`.
    pub fn effective_coeffs(&self, delta: f64) -> Result<SidebandPair> {
        let r_lo = reflection(delta, self.d)?.norm();
        let rr = self.sideband_coeffs(delta)?;
        let scale = (1.0 - self.f2) * r_lo;
        Ok(SidebandPair {
            plus: scale * rr.plus + self.f2,
            minus: scale * rr.minus + self.f2,
        })
    }

    /// Reflected LO power fraction `(1 − f²)·|r(Δ)|² + f²`, the standard
    /// quantum level of the scan relative to its far-detuned value.
    pub fn sql_level(&self, delta: f64) -> Result<f64> {
        let r2 = reflection(delta, self.d)?.norm_sqr();
        Ok((1.0 - self.f2) * r2 + self.f2)
    }
}
