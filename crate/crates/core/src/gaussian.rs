//! Two-mode Gaussian states of the sideband pair.
//!
//! States carry a 4-component quadrature mean vector and a 4×4 covariance
//! matrix in a fixed ordering. In the spectral basis the ordering is
//! `(p₊, q₊, p₋, q₋)` for the upper/lower sideband; in the
//! symmetric/antisymmetric basis it is `(p_s, q_s, p_a, q_a)` with
//! `p_s = (p₊ + p₋)/√2` and so on. Vacuum variance is 1 (`[p, q] = 2i`).

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Modal basis tag for the mean/covariance ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    /// Spectral sideband modes, ordered `(p₊, q₊, p₋, q₋)`.
    #[serde(rename = "sideband")]
    Sideband,
    /// Symmetric/antisymmetric combinations, ordered `(p_s, q_s, p_a, q_a)`.
    #[serde(rename = "sa")]
    SymAntisym,
}

impl Basis {
    pub fn toggled(self) -> Self {
        match self {
            Basis::Sideband => Basis::SymAntisym,
            Basis::SymAntisym => Basis::Sideband,
        }
    }
}

/// The orthogonal, involutive change-of-basis matrix between the sideband
/// and S/A orderings. Acts on mean vectors as `m ↦ M m` and on covariances
/// as `σ ↦ M σ Mᵀ`; `M² = 1`.
pub fn basis_matrix() -> Matrix4<f64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Matrix4::new(
        s, 0.0, s, 0.0, //
        0.0, s, 0.0, s, //
        s, 0.0, -s, 0.0, //
        0.0, s, 0.0, -s,
    )
}

/// Specification of the two-mode state produced by weak phase modulation of
/// the carrier: both sidebands are coherently displaced with magnitude set
/// by `s` and direction by the modulation phase, plus optional symmetric
/// classical excess noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseModSpec {
    /// Displacement magnitude in vacuum standard deviations (s = 2E₀β₀).
    pub s: f64,
    /// Modulation phase Φ in radians.
    pub phi: f64,
    /// Excess variance added to `p₊` and `q₋`.
    #[serde(default)]
    pub excess_p: f64,
    /// Excess variance added to `q₊` and `p₋`.
    #[serde(default)]
    pub excess_q: f64,
}

impl PhaseModSpec {
    pub fn new(s: f64, phi: f64, excess_p: f64, excess_q: f64) -> Result<Self> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "displacement magnitude must be ≥ 0, got {s}"
            )));
        }
        if excess_p < 0.0 || excess_q < 0.0 {
            return Err(Error::InvalidParameter(
                "excess noise variances must be ≥ 0".into(),
            ));
        }
        Ok(Self { s, phi, excess_p, excess_q })
    }
}

/// A two-mode Gaussian state: 4 means, 10 independent covariances, and the
/// basis tag fixing their interpretation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StateRepr", try_from = "StateRepr")]
pub struct TwoModeGaussian {
    mean: Vector4<f64>,
    cov: Matrix4<f64>,
    basis: Basis,
}

#[derive(Serialize, Deserialize)]
struct StateRepr {
    basis: Basis,
    mean: [f64; 4],
    cov: [[f64; 4]; 4],
}

impl From<TwoModeGaussian> for StateRepr {
    fn from(state: TwoModeGaussian) -> Self {
        let mut cov = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                cov[i][j] = state.cov[(i, j)];
            }
        }
        StateRepr {
            basis: state.basis,
            mean: [state.mean[0], state.mean[1], state.mean[2], state.mean[3]],
            cov,
        }
    }
}

impl TryFrom<StateRepr> for TwoModeGaussian {
    type Error = Error;

    fn try_from(repr: StateRepr) -> Result<Self> {
        let mean = Vector4::from_column_slice(&repr.mean);
        let cov = Matrix4::from_fn(|i, j| repr.cov[i][j]);
        TwoModeGaussian::new(mean, cov, repr.basis)
    }
}

/// Symplectic eigenvalues of a 4×4 two-mode covariance matrix, smallest
/// first. Vacuum has both equal to 1; admissible states have both ≥ 1.
pub fn symplectic_eigenvalues(cov: &Matrix4<f64>) -> (f64, f64) {
    let det_a = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
    let det_b = cov[(2, 2)] * cov[(3, 3)] - cov[(2, 3)] * cov[(3, 2)];
    let det_c = cov[(0, 2)] * cov[(1, 3)] - cov[(0, 3)] * cov[(1, 2)];
    let inv = det_a + det_b + 2.0 * det_c;
    let disc = (inv * inv - 4.0 * cov.determinant()).max(0.0);
    let hi = ((inv + disc.sqrt()) / 2.0).max(0.0).sqrt();
    let lo = ((inv - disc.sqrt()) / 2.0).max(0.0).sqrt();
    (lo, hi)
}

impl TwoModeGaussian {
    /// Build a state from explicit moments, rejecting covariances that are
    /// asymmetric, not positive semidefinite, or below the Heisenberg bound.
    pub fn new(mean: Vector4<f64>, cov: Matrix4<f64>, basis: Basis) -> Result<Self> {
        let scale = cov.abs().max().max(1.0);
        for i in 0..4 {
            for j in (i + 1)..4 {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter(format!(
                        "covariance not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let sym = (cov + cov.transpose()) * 0.5;
        let min_eig = sym
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |m, &e| m.min(e));
        if min_eig < -1e-9 * scale {
            return Err(Error::InvalidParameter(format!(
                "covariance not positive semidefinite (eigenvalue {min_eig})"
            )));
        }
        let (nu_min, _) = symplectic_eigenvalues(&sym);
        if nu_min < 1.0 - 1e-9 {
            return Err(Error::InadmissibleState(nu_min));
        }
        Ok(Self { mean, cov: sym, basis })
    }

    /// Vacuum: zero means, identity covariance.
    pub fn vacuum() -> Self {
        Self {
            mean: Vector4::zeros(),
            cov: Matrix4::identity(),
            basis: Basis::Sideband,
        }
    }

    /// Coherent state: vacuum covariance with the given means.
    pub fn coherent(mean: Vector4<f64>, basis: Basis) -> Self {
        Self {
            mean,
            cov: Matrix4::identity(),
            basis,
        }
    }

    /// Thermal state with uniform excess `n` on every quadrature, so the
    /// covariance is `(1 + n)·1` and both symplectic eigenvalues `1 + n`.
    pub fn thermal(n_excess: f64) -> Result<Self> {
        if n_excess < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "thermal excess must be ≥ 0, got {n_excess}"
            )));
        }
        Ok(Self {
            mean: Vector4::zeros(),
            cov: Matrix4::identity() * (1.0 + n_excess),
            basis: Basis::Sideband,
        })
    }

    /// State produced by weak phase modulation: in the S/A basis the means
    /// are `(0, s·cosΦ, s·sinΦ, 0)`, and the excess noise follows the
    /// symmetric sideband pattern `Δ²p₊ = Δ²q₋`, `Δ²q₊ = Δ²p₋`.
    pub fn phase_modulated(spec: &PhaseModSpec) -> Result<Self> {
        PhaseModSpec::new(spec.s, spec.phi, spec.excess_p, spec.excess_q)?;
        let mean_sa = Vector4::new(
            0.0,
            spec.s * spec.phi.cos(),
            spec.s * spec.phi.sin(),
            0.0,
        );
        let mean = basis_matrix() * mean_sa;
        let mut cov = Matrix4::identity();
        cov[(0, 0)] += spec.excess_p;
        cov[(1, 1)] += spec.excess_q;
        cov[(2, 2)] += spec.excess_q;
        cov[(3, 3)] += spec.excess_p;
        Ok(Self {
            mean,
            cov,
            basis: Basis::Sideband,
        })
    }

    pub fn mean(&self) -> &Vector4<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix4<f64> {
        &self.cov
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// Exact change of modal basis: `m ↦ M m`, `σ ↦ M σ Mᵀ`, basis tag
    /// toggled. Involutive.
    pub fn basis_change(&self) -> Self {
        let m = basis_matrix();
        Self {
            mean: m * self.mean,
            cov: m * self.cov * m.transpose(),
            basis: self.basis.toggled(),
        }
    }

    /// The state expressed in `basis`, converting if necessary.
    pub fn to_basis(&self, basis: Basis) -> Self {
        if self.basis == basis {
            self.clone()
        } else {
            self.basis_change()
        }
    }

    /// Symplectic eigenvalues of the covariance, smallest first.
    pub fn symplectic_eigenvalues(&self) -> (f64, f64) {
        symplectic_eigenvalues(&self.cov)
    }

    /// Semiclassical amplitude and phase quadrature means `(⟨𝒫⟩, ⟨𝒬⟩)`.
    ///
    /// A phase-modulated state has `⟨𝒫⟩ = 0` and `⟨𝒬⟩ = s·exp(iΦ)`: only
    /// the semiclassical phase quadrature is displaced.
    pub fn semiclassical_means(&self) -> (Complex64, Complex64) {
        let sa = self.to_basis(Basis::SymAntisym);
        let m = sa.mean;
        (
            Complex64::new(m[0], -m[3]),
            Complex64::new(m[1], m[2]),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn basis_matrix_is_involutive() {
        let m = basis_matrix();
        let id = m * m;
        assert!((id - Matrix4::identity()).abs().max() < 1e-12);
        assert!((m * m.transpose() - Matrix4::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn vacuum_is_basis_invariant() {
        let vac = TwoModeGaussian::vacuum();
        let flipped = vac.basis_change();
        assert!(flipped.mean().abs().max() < 1e-15);
        assert!((flipped.cov() - Matrix4::identity()).abs().max() < 1e-12);
        assert_eq!(flipped.basis(), Basis::SymAntisym);
    }

    #[test]
    fn basis_change_of_balanced_q_displacement() {
        let a = 1.3;
        let state = TwoModeGaussian::coherent(Vector4::new(0.0, a, 0.0, a), Basis::Sideband);
        let sa = state.basis_change();
        let expected = Vector4::new(0.0, a * 2.0f64.sqrt(), 0.0, 0.0);
        assert!((sa.mean() - expected).abs().max() < 1e-12);
    }

    #[test]
    fn thermal_state_eigenvalues() {
        let th = TwoModeGaussian::thermal(0.5).unwrap();
        assert!((th.cov() - Matrix4::identity() * 1.5).abs().max() < 1e-15);
        let (lo, hi) = th.symplectic_eigenvalues();
        assert_relative_eq!(lo, 1.5, epsilon = 1e-12);
        assert_relative_eq!(hi, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn inadmissible_covariance_is_rejected() {
        let cov = Matrix4::identity() * 0.5;
        let err = TwoModeGaussian::new(Vector4::zeros(), cov, Basis::Sideband).unwrap_err();
        match err {
            Error::InadmissibleState(nu) => assert_relative_eq!(nu, 0.5, epsilon = 1e-12),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn phase_modulated_means() {
        let spec = PhaseModSpec::new(2.0, 0.0, 0.0, 0.0).unwrap();
        let sa = TwoModeGaussian::phase_modulated(&spec)
            .unwrap()
            .to_basis(Basis::SymAntisym);
        assert!((sa.mean() - Vector4::new(0.0, 2.0, 0.0, 0.0)).abs().max() < 1e-12);

        let spec = PhaseModSpec::new(2.0, FRAC_PI_2, 0.0, 0.0).unwrap();
        let sa = TwoModeGaussian::phase_modulated(&spec)
            .unwrap()
            .to_basis(Basis::SymAntisym);
        assert!((sa.mean() - Vector4::new(0.0, 0.0, 2.0, 0.0)).abs().max() < 1e-12);
    }

    #[test]
    fn phase_modulated_amplitudes_are_conjugate_opposites() {
        for &phi in &[0.0, 0.7, FRAC_PI_2, 2.0, PI, 4.4] {
            let spec = PhaseModSpec::new(3.1, phi, 0.0, 0.0).unwrap();
            let state = TwoModeGaussian::phase_modulated(&spec).unwrap();
            let m = state.mean();
            let alpha_p = Complex64::new(m[0], m[1]) / 2.0;
            let alpha_m = Complex64::new(m[2], m[3]) / 2.0;
            assert_abs_diff_eq!(alpha_p, -alpha_m.conj(), epsilon = 1e-12);
        }
    }

    #[test]
    fn phase_modulated_excess_pattern() {
        let spec = PhaseModSpec::new(1.0, 0.3, 0.25, 0.28).unwrap();
        let state = TwoModeGaussian::phase_modulated(&spec).unwrap();
        let c = state.cov();
        assert_relative_eq!(c[(0, 0)], 1.25, epsilon = 1e-15);
        assert_relative_eq!(c[(1, 1)], 1.28, epsilon = 1e-15);
        assert_relative_eq!(c[(2, 2)], 1.28, epsilon = 1e-15);
        assert_relative_eq!(c[(3, 3)], 1.25, epsilon = 1e-15);
    }

    #[test]
    fn semiclassical_means_examples() {
        let (p, q) = TwoModeGaussian::vacuum().semiclassical_means();
        assert!(p.norm() < 1e-15 && q.norm() < 1e-15);

        for &phi in &[0.0, 0.9, FRAC_PI_2, 3.9] {
            let spec = PhaseModSpec::new(2.0, phi, 0.0, 0.0).unwrap();
            let (p, q) = TwoModeGaussian::phase_modulated(&spec)
                .unwrap()
                .semiclassical_means();
            assert!(p.norm() < 1e-12);
            assert_abs_diff_eq!(q, Complex64::from_polar(2.0, phi), epsilon = 1e-12);
        }

        let amp = TwoModeGaussian::coherent(Vector4::new(0.7, 0.0, 0.0, 0.0), Basis::SymAntisym);
        let (p, q) = amp.semiclassical_means();
        assert_abs_diff_eq!(p, Complex64::new(0.7, 0.0), epsilon = 1e-12);
        assert!(q.norm() < 1e-15);
    }

    #[test]
    fn state_json_round_trip() {
        let spec = PhaseModSpec::new(2.0, 0.4, 0.1, 0.2).unwrap();
        let state = TwoModeGaussian::phase_modulated(&spec).unwrap();
        let json = serde_json::to_string(&state).unwrap();
        assert!(json.contains("\"basis\":\"sideband\""));
        let back: TwoModeGaussian = serde_json::from_str(&json).unwrap();
        assert!((back.mean() - state.mean()).abs().max() < 1e-15);
        assert!((back.cov() - state.cov()).abs().max() < 1e-15);
    }

    fn arb_admissible() -> impl Strategy<Value = TwoModeGaussian> {
        (
            proptest::array::uniform4(-5.0f64..5.0),
            proptest::array::uniform16(-0.8f64..0.8),
        )
            .prop_map(|(mean, a)| {
                let a = Matrix4::from_fn(|i, j| a[4 * i + j]);
                // 1 + AAᵀ dominates the vacuum, hence always admissible.
                let cov = Matrix4::identity() + a * a.transpose();
                TwoModeGaussian::new(Vector4::from_column_slice(&mean), cov, Basis::Sideband)
                    .unwrap()
            })
    }

    proptest! {
        #[test]
        fn basis_change_preserves_invariants(state in arb_admissible()) {
            let flipped = state.basis_change();
            let back = flipped.basis_change();
            prop_assert!((back.mean() - state.mean()).abs().max() < 1e-10);
            prop_assert!((back.cov() - state.cov()).abs().max() < 1e-10);

            prop_assert!((flipped.cov().trace() - state.cov().trace()).abs() < 1e-9);
            prop_assert!(
                (flipped.cov().determinant() - state.cov().determinant()).abs()
                    < 1e-8 * state.cov().determinant().abs().max(1.0)
            );

            let (lo_a, hi_a) = state.symplectic_eigenvalues();
            let (lo_b, hi_b) = flipped.symplectic_eigenvalues();
            prop_assert!((lo_a - lo_b).abs() < 1e-8);
            prop_assert!((hi_a - hi_b).abs() < 1e-8);
            prop_assert!(lo_b >= 1.0 - 1e-9);
        }

        #[test]
        fn phase_modulated_mean_norm_is_s(
            s in 0.0f64..40.0,
            phi in 0.0f64..(2.0 * PI),
        ) {
            let spec = PhaseModSpec::new(s, phi, 0.0, 0.0).unwrap();
            let state = TwoModeGaussian::phase_modulated(&spec).unwrap();
            prop_assert!((state.mean().norm() - s).abs() < 1e-10);
            let sa = state.to_basis(Basis::SymAntisym);
            prop_assert!(sa.mean()[0].abs() < 1e-12);
            prop_assert!(sa.mean()[3].abs() < 1e-12);
        }
    }
}
