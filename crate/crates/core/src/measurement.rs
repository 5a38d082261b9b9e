//! The resonator-detection observables and their predicted statistics.
//!
//! At each detuning the demodulated photocurrent components are linear forms
//! in the four sideband quadratures plus vacuum noise,
//!
//! ```text
//! J_cos =  x₊ p₊ + y₊ q₊ + x₋ p₋ + y₋ q₋ + w_cos
//! J_sin = −y₊ p₊ + x₊ q₊ + y₋ p₋ − x₋ q₋ + w_sin
//! ```
//!
//! with `G_{±Ω}(Δ) = x_± + i y_±` the effective sideband coefficients. The
//! vacuum terms collect the resonator-transmitted modes and, with imperfect
//! mode matching, the two contamination modes; their second moments close
//! the shot-noise budget exactly: for vacuum input,
//! `Var(J_cos) = Var(J_sin) = 2·sql(Δ)` and `Cov(J_cos, J_sin) = 0` at every
//! detuning.

use nalgebra::{Matrix2, Vector2, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{basis_matrix, Basis, TwoModeGaussian};
use crate::transfer::{phase_psi, reflection, transmission, ResonatorParams};

/// Linear-form coefficients of `(J_cos, J_sin)` at one detuning, with the
/// vacuum covariance block and the local standard quantum level.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub delta: f64,
    /// Coefficients of `J_cos` on `(p₊, q₊, p₋, q₋)`.
    pub c_cos: Vector4<f64>,
    /// Coefficients of `J_sin` on `(p₊, q₊, p₋, q₋)`.
    pub c_sin: Vector4<f64>,
    /// Second moments of `(w_cos, w_sin)` contributed by vacuum modes.
    pub vac_cov: Matrix2<f64>,
    /// Reflected LO power fraction at this detuning.
    pub sql: f64,
}

/// Predicted first and second moments of `(J_cos, J_sin)` at one detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedMoments {
    pub delta: f64,
    pub mean_cos: f64,
    pub mean_sin: f64,
    pub var_cos: f64,
    pub var_sin: f64,
    pub cov_cs: f64,
}

impl PredictedMoments {
    pub fn mean2(&self) -> Vector2<f64> {
        Vector2::new(self.mean_cos, self.mean_sin)
    }

    pub fn cov2(&self) -> Matrix2<f64> {
        Matrix2::new(self.var_cos, self.cov_cs, self.cov_cs, self.var_sin)
    }
}

/// Quadrature weights a single bosonic mode contributes to `(J_cos, J_sin)`
/// when it enters the spectral operator as `C·m̂` (annihilation).
fn weights_annihilation(c: Complex64) -> ([f64; 2], [f64; 2]) {
    ([c.re, -c.im], [c.im, c.re])
}

/// Same for a mode entering as `C·m̂†` (creation).
fn weights_creation(c: Complex64) -> ([f64; 2], [f64; 2]) {
    ([c.re, c.im], [c.im, -c.re])
}

/// Build the observable coefficients at `delta`. The vacuum block sums, for
/// every vacuum mode, the outer product of its `(w_cos, w_sin)` quadrature
/// weights under the same rule as the signal modes.
pub fn coefficients(delta: f64, params: &ResonatorParams) -> Result<CoefficientSet> {
    params.validate()?;
    let g = params.effective_coeffs(delta)?;

    // Upper sideband enters as G₊*·â₊, lower as G₋·â₋†.
    let (up_cos, up_sin) = weights_annihilation(g.plus.conj());
    let (lo_cos, lo_sin) = weights_creation(g.minus);
    let c_cos = Vector4::new(up_cos[0], up_cos[1], lo_cos[0], lo_cos[1]);
    let c_sin = Vector4::new(up_sin[0], up_sin[1], lo_sin[0], lo_sin[1]);

    let f2 = params.f2;
    let f = f2.sqrt();
    let root_matched = (1.0 - f2).sqrt();
    let r_lo = reflection(delta, params.d)?.norm();
    let lo_phase = Complex64::from_polar(1.0, phase_psi(delta, params.d)?);
    let rr = params.sideband_coeffs(delta)?;
    let t_up = transmission(delta + params.omega_ratio, params.d)?;
    let t_lo = transmission(delta - params.omega_ratio, params.d)?;

    // Vacuum modes: the two contamination modes ĉ_{±Ω} and the two
    // resonator-transmitted modes.
    let vac_modes = [
        weights_annihilation(f * root_matched * (Complex64::new(1.0, 0.0) - r_lo * rr.plus.conj())),
        weights_creation(f * root_matched * (Complex64::new(1.0, 0.0) - r_lo * rr.minus)),
        weights_annihilation(root_matched * r_lo * t_up.sqrt() * lo_phase.conj()),
        weights_creation(root_matched * r_lo * t_lo.sqrt() * lo_phase),
    ];
    let mut vac_cov = Matrix2::zeros();
    for (wc, ws) in vac_modes {
        vac_cov[(0, 0)] += wc[0] * wc[0] + wc[1] * wc[1];
        vac_cov[(1, 1)] += ws[0] * ws[0] + ws[1] * ws[1];
        let cross = wc[0] * ws[0] + wc[1] * ws[1];
        vac_cov[(0, 1)] += cross;
        vac_cov[(1, 0)] += cross;
    }

    Ok(CoefficientSet {
        delta,
        c_cos,
        c_sin,
        vac_cov,
        sql: params.sql_level(delta)?,
    })
}

impl CoefficientSet {
    /// The same linear forms expressed on the S/A quadratures
    /// `(p_s, q_s, p_a, q_a)`.
    pub fn sa_coefficients(&self) -> (Vector4<f64>, Vector4<f64>) {
        let m = basis_matrix();
        (m * self.c_cos, m * self.c_sin)
    }
}

/// Predict the photocurrent moments for a Gaussian input state.
///
/// Un-normalized, vacuum input yields `Var = 2·sql(Δ)` on both components.
/// With `normalized` the means are divided by `√(2·sql)` and second moments
/// by `2·sql`, so vacuum reads exactly unit variance at every detuning.
pub fn predict_moments(
    state: &TwoModeGaussian,
    delta: f64,
    params: &ResonatorParams,
    normalized: bool,
) -> Result<PredictedMoments> {
    let coeff = coefficients(delta, params)?;
    let state = state.to_basis(Basis::Sideband);

    let mut mean = Vector2::new(
        coeff.c_cos.dot(state.mean()),
        coeff.c_sin.dot(state.mean()),
    );
    let sigma = state.cov();
    let cc = (coeff.c_cos.transpose() * sigma * coeff.c_cos)[(0, 0)];
    let ss = (coeff.c_sin.transpose() * sigma * coeff.c_sin)[(0, 0)];
    let cs = (coeff.c_cos.transpose() * sigma * coeff.c_sin)[(0, 0)];
    let mut cov = Matrix2::new(cc, cs, cs, ss) + coeff.vac_cov;

    if normalized {
        let scale = 2.0 * coeff.sql;
        if scale <= 0.0 {
            return Err(Error::VanishingSql(delta));
        }
        mean /= scale.sqrt();
        cov /= scale;
    }

    Ok(PredictedMoments {
        delta,
        mean_cos: mean[0],
        mean_sin: mean[1],
        var_cos: cov[(0, 0)],
        var_sin: cov[(1, 1)],
        cov_cs: cov[(0, 1)],
    })
}

/// Moments of the phase-combined component
/// `J_Θ = cosΘ·J_cos + sinΘ·J_sin`.
pub fn theta_projection(moments: &PredictedMoments, theta: f64) -> (f64, f64) {
    let u = Vector2::new(theta.cos(), theta.sin());
    let mean = u.dot(&moments.mean2());
    let var = (u.transpose() * moments.cov2() * u)[(0, 0)];
    (mean, var)
}

/// Mean and variance of the general two-mode quadrature
/// `X(φ, φ′, θ) = cosθ·X₊(φ) + sinθ·X₋(φ′)`, evaluated directly on the
/// state with no resonator in the path.
pub fn general_quadrature(
    state: &TwoModeGaussian,
    varphi: f64,
    phi_prime: f64,
    theta: f64,
) -> (f64, f64) {
    let state = state.to_basis(Basis::Sideband);
    let w = Vector4::new(
        theta.cos() * varphi.cos(),
        theta.cos() * varphi.sin(),
        theta.sin() * phi_prime.cos(),
        theta.sin() * phi_prime.sin(),
    );
    let mean = w.dot(state.mean());
    let var = (w.transpose() * state.cov() * w)[(0, 0)];
    (mean, var)
}

/// Continuous modal-mixing description in the upper-sideband region: the
/// measured mode interpolates between the S/A combinations (ξ = 0) and the
/// bare lower sideband (ξ = π/2) as the upper sideband is attenuated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalMixing {
    /// Mixing angle ξ = arccos √(1 − T(Δ + Ω/γ)), in [0, π/2].
    pub xi: f64,
    /// Surviving upper-sideband amplitude cos ξ.
    pub attenuation: f64,
    /// Phase-space rotation Ψ(Δ + Ω/γ) of the surviving component.
    pub rotation: f64,
}

/// Diagnostic mixing angle of the upper-sideband transformation.
pub fn modal_mixing_angle(delta: f64, params: &ResonatorParams) -> Result<ModalMixing> {
    params.validate()?;
    let t = transmission(delta + params.omega_ratio, params.d)?;
    let cos_xi = (1.0 - t).max(0.0).sqrt();
    Ok(ModalMixing {
        xi: cos_xi.clamp(0.0, 1.0).acos(),
        attenuation: cos_xi,
        rotation: phase_psi(delta + params.omega_ratio, params.d)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::PhaseModSpec;
    use approx::assert_relative_eq;
    use nalgebra::Matrix4;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    fn closure_error(c: &CoefficientSet) -> f64 {
        let target = 2.0 * c.sql;
        let e_cos = (c.c_cos.dot(&c.c_cos) + c.vac_cov[(0, 0)] - target).abs();
        let e_sin = (c.c_sin.dot(&c.c_sin) + c.vac_cov[(1, 1)] - target).abs();
        let e_cross = (c.c_cos.dot(&c.c_sin) + c.vac_cov[(0, 1)]).abs();
        e_cos.max(e_sin).max(e_cross)
    }

    #[test]
    fn far_detuned_coefficients() {
        let params = ResonatorParams::new(0.3, 2.9, 0.2).unwrap();
        let c = coefficients(1e7, &params).unwrap();
        assert!((c.c_cos - Vector4::new(1.0, 0.0, 1.0, 0.0)).abs().max() < 1e-6);
        assert!((c.c_sin - Vector4::new(0.0, 1.0, 0.0, -1.0)).abs().max() < 1e-6);
        assert!(c.vac_cov.abs().max() < 1e-6);
        assert!((c.sql - 1.0).abs() < 1e-6);

        // Far detuned the S/A projection is exact: J_cos → √2 p_s,
        // J_sin → √2 q_a.
        let (sa_cos, sa_sin) = c.sa_coefficients();
        let rt2 = 2.0f64.sqrt();
        assert!((sa_cos - Vector4::new(rt2, 0.0, 0.0, 0.0)).abs().max() < 1e-6);
        assert!((sa_sin - Vector4::new(0.0, 0.0, 0.0, rt2)).abs().max() < 1e-6);
    }

    #[test]
    fn resonant_upper_sideband_measures_lower_mode() {
        let params = ResonatorParams::new(0.0, 1e3, 0.0).unwrap();
        let c = coefficients(-1e3, &params).unwrap();
        // The upper-sideband coefficients vanish identically and a full
        // unit of vacuum enters.
        assert!(c.c_cos[0].abs() < 1e-12 && c.c_cos[1].abs() < 1e-12);
        assert!((c.vac_cov[(0, 0)] - 1.0).abs() < 1e-5);
        // The lower-sideband quadrature passes at unit strength; the
        // residual rotation is the first-order narrowband tail
        // atan(1/Ωr) − atan(1/2Ωr) ≈ 1/(2Ωr).
        let g_lo = (c.c_cos[2] * c.c_cos[2] + c.c_cos[3] * c.c_cos[3]).sqrt();
        assert!((g_lo - 1.0).abs() < 1e-5);
        assert!((c.c_cos[2] - 1.0).abs() < 1e-5);
        assert!((c.c_cos[3] - 5.0e-4).abs() < 1e-6);
    }

    #[test]
    fn mismatch_vacuum_at_full_transmission() {
        let params = ResonatorParams::new(0.0, 1e3, 0.15).unwrap();
        let c = coefficients(0.0, &params).unwrap();
        // Closure gives total vacuum-input variance 2f² when the LO is
        // fully transmitted.
        let total = c.c_cos.dot(&c.c_cos) + c.vac_cov[(0, 0)];
        assert!((total - 2.0 * 0.15).abs() < 1e-10);
        assert!((c.vac_cov[(0, 0)] - 2.0 * 0.15 * (1.0 - 0.15)).abs() < 1e-10);
    }

    #[test]
    fn vacuum_closure_across_parameters() {
        for &d in &[0.0, 0.05, 0.3, 1.0] {
            for &f2 in &[0.0, 0.15, 0.5] {
                let params = ResonatorParams::new(d, 2.9, f2).unwrap();
                for &delta in grid(301, -12.0, 12.0).iter() {
                    let c = coefficients(delta, &params).unwrap();
                    assert!(
                        closure_error(&c) < 1e-10,
                        "closure violated at d={d} f2={f2} delta={delta}"
                    );
                }
            }
        }
    }

    #[test]
    fn vacuum_input_is_flat_shot_noise() {
        let vac = TwoModeGaussian::vacuum();
        let params = ResonatorParams::new(0.05, 2.9, 0.15).unwrap();
        for &delta in grid(241, -12.0, 12.0).iter() {
            let m = predict_moments(&vac, delta, &params, true).unwrap();
            assert!(m.mean_cos.abs() < 1e-12 && m.mean_sin.abs() < 1e-12);
            assert!((m.var_cos - 1.0).abs() < 1e-10);
            assert!((m.var_sin - 1.0).abs() < 1e-10);
            assert!(m.cov_cs.abs() < 1e-10);
        }
    }

    #[test]
    fn lossless_detection_is_homodyne_like() {
        let params = ResonatorParams::new(1.0, 2.9, 0.0).unwrap();
        let vac = TwoModeGaussian::vacuum();
        for &delta in grid(241, -12.0, 12.0).iter() {
            let m = predict_moments(&vac, delta, &params, false).unwrap();
            assert!((m.var_cos - 2.0).abs() < 1e-12);
            assert!((m.var_sin - 2.0).abs() < 1e-12);
            let c = coefficients(delta, &params).unwrap();
            assert!((c.sql - 1.0).abs() < 1e-12);
        }

        // Narrowband region (ii): the cosine component lives on the S mode
        // and the sine component on the A mode.
        let narrow = ResonatorParams::new(1.0, 1e3, 0.0).unwrap();
        for &delta in grid(41, -2.0, 2.0).iter() {
            let (sa_cos, sa_sin) = coefficients(delta, &narrow).unwrap().sa_coefficients();
            assert!(sa_cos[2].abs() < 1e-2 && sa_cos[3].abs() < 1e-2);
            assert!(sa_sin[0].abs() < 1e-2 && sa_sin[1].abs() < 1e-2);
        }
    }

    #[test]
    fn simultaneous_measurement_noise_penalty() {
        // Lower-sideband displacement read at the upper-sideband resonance:
        // the mean passes at 1/√2 of the direct-detection value while the
        // variance stays at the shot level.
        let params = ResonatorParams::new(0.0, 1e3, 0.0).unwrap();
        let s = 3.0;
        let state = TwoModeGaussian::coherent(Vector4::new(0.0, 0.0, s, 0.0), Basis::Sideband);
        let m = predict_moments(&state, -1e3, &params, true).unwrap();
        assert!((m.mean_cos - s / 2.0f64.sqrt()).abs() < 1e-4);
        assert!((m.var_cos - 1.0).abs() < 1e-5);
    }

    #[test]
    fn phase_modulated_far_detuned_means() {
        let params = ResonatorParams::new(0.05, 2.9, 0.15).unwrap();
        let spec = PhaseModSpec::new(2.0, FRAC_PI_2, 0.0, 0.0).unwrap();
        let state = TwoModeGaussian::phase_modulated(&spec).unwrap();
        let m = predict_moments(&state, 1e7, &params, true).unwrap();
        assert!(m.mean_cos.abs() < 1e-5);
        assert!(m.mean_sin.abs() < 1e-5);
    }

    #[test]
    fn theta_projection_endpoints() {
        let params = ResonatorParams::new(0.05, 2.9, 0.15).unwrap();
        let spec = PhaseModSpec::new(1.5, 0.7, 0.1, 0.2).unwrap();
        let state = TwoModeGaussian::phase_modulated(&spec).unwrap();
        let m = predict_moments(&state, -2.2, &params, true).unwrap();

        let (mean0, var0) = theta_projection(&m, 0.0);
        assert_relative_eq!(mean0, m.mean_cos, epsilon = 1e-14);
        assert_relative_eq!(var0, m.var_cos, epsilon = 1e-14);

        let (mean90, var90) = theta_projection(&m, FRAC_PI_2);
        assert_relative_eq!(mean90, m.mean_sin, epsilon = 1e-14);
        assert_relative_eq!(var90, m.var_sin, epsilon = 1e-14);

        for &theta in &[0.3, 1.1, 2.9] {
            let (_, va) = theta_projection(&m, theta);
            let (_, vb) = theta_projection(&m, theta + FRAC_PI_2);
            assert_relative_eq!(va + vb, m.var_cos + m.var_sin, epsilon = 1e-12);
        }
    }

    #[test]
    fn general_quadrature_examples() {
        let vac = TwoModeGaussian::vacuum();
        let (mean, var) = general_quadrature(&vac, 0.0, 0.0, FRAC_PI_4);
        assert!(mean.abs() < 1e-15);
        assert_relative_eq!(var, 1.0, epsilon = 1e-12);

        // Equal local phases at θ = π/4 realize the S-mode quadrature.
        let spec = PhaseModSpec::new(2.0, 1.1, 0.3, 0.1).unwrap();
        let state = TwoModeGaussian::phase_modulated(&spec).unwrap();
        let sa = state.to_basis(Basis::SymAntisym);
        for &phi in &[0.0, 0.6, 2.2] {
            let (mean, var) = general_quadrature(&state, phi, phi, FRAC_PI_4);
            let w = Vector4::new(phi.cos(), phi.sin(), 0.0, 0.0);
            let expect_mean = w.dot(sa.mean());
            let expect_var = (w.transpose() * sa.cov() * w)[(0, 0)];
            assert_relative_eq!(mean, expect_mean, epsilon = 1e-12);
            assert_relative_eq!(var, expect_var, epsilon = 1e-12);
        }
    }

    #[test]
    fn modal_mixing_limits() {
        let params = ResonatorParams::new(0.0, 2.9, 0.0).unwrap();
        assert!(modal_mixing_angle(1e7, &params).unwrap().xi < 1e-3);
        assert_relative_eq!(
            modal_mixing_angle(-2.9, &params).unwrap().xi,
            FRAC_PI_2,
            epsilon = 1e-12
        );

        let lossless = ResonatorParams::new(1.0, 2.9, 0.0).unwrap();
        for &delta in &[-5.0, -2.9, 0.0, 3.3] {
            assert!(modal_mixing_angle(delta, &lossless).unwrap().xi < 1e-12);
        }
    }

    #[test]
    fn predicted_curves_mirror_symmetry() {
        // Exchange-symmetric state: variances even in Δ.
        let params = ResonatorParams::new(0.05, 2.9, 0.15).unwrap();
        let spec = PhaseModSpec::new(0.0, 0.0, 0.2, 0.2).unwrap();
        let state = TwoModeGaussian::phase_modulated(&spec).unwrap();
        for &delta in grid(101, 0.0, 10.0).iter() {
            let pos = predict_moments(&state, delta, &params, true).unwrap();
            let neg = predict_moments(&state, -delta, &params, true).unwrap();
            assert!((pos.var_cos - neg.var_cos).abs() < 1e-12);
            assert!((pos.var_sin - neg.var_sin).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_correlation_tracks_energy_imbalance() {
        let params = ResonatorParams::new(0.05, 2.9, 0.15).unwrap();
        let balanced = TwoModeGaussian::new(
            Vector4::zeros(),
            Matrix4::from_diagonal(&Vector4::new(1.4, 1.4, 1.4, 1.4)),
            Basis::Sideband,
        )
        .unwrap();
        let lopsided = |k: f64| {
            TwoModeGaussian::new(
                Vector4::zeros(),
                Matrix4::from_diagonal(&Vector4::new(1.4 + k, 1.4 + k, 1.4, 1.4)),
                Basis::Sideband,
            )
            .unwrap()
        };
        for &delta in grid(61, -9.0, 9.0).iter() {
            let m0 = predict_moments(&balanced, delta, &params, true).unwrap();
            assert!(m0.cov_cs.abs() < 1e-12, "balanced state at delta={delta}");

            let m1 = predict_moments(&lopsided(0.2), delta, &params, true).unwrap();
            let m2 = predict_moments(&lopsided(0.4), delta, &params, true).unwrap();
            // Linear response in the imbalance.
            assert!((m2.cov_cs - 2.0 * m1.cov_cs).abs() < 1e-10);
        }
    }
}
