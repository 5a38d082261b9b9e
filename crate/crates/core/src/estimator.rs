//! Inversion of the forward model: DC calibration and moment recovery.
//!
//! Reconstruction runs in two stages. A damped nonlinear least-squares fit
//! of the DC reflection profile pins the detuning axis and the resonator
//! constants; given that calibration the photocurrent moment curves are
//! exactly linear in the 4 quadrature means and 10 covariance elements, so
//! the second stage is weighted linear least squares with honest standard
//! errors from the inverse normal matrix.
//!
//! The DC profile alone cannot separate `d` from `f²`: it depends on them
//! only through the dip floor `D = (1 − f²)·d + f²`. The calibration
//! therefore fits `D` and splits it using whichever of the two is pinned by
//! an independent measurement (normally `f²`, the mode-matching fraction).

use nalgebra::{DMatrix, DVector, Matrix4, SMatrix, SVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::basis_matrix;
use crate::measurement::coefficients;
use crate::scan::MomentCurves;
use crate::transfer::ResonatorParams;

/// Upper-triangle element order used for packed 4×4 covariances.
pub const COV_INDICES: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

/// Result of the DC-profile calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub d: f64,
    pub f2: f64,
    /// Raw grid units per half-bandwidth.
    pub delta_scale: f64,
    /// Raw grid coordinate of exact resonance.
    pub delta_offset: f64,
    /// Detector gain (far-detuned DC level).
    pub gain: f64,
    /// Additive electronic offset of the DC signal.
    pub offset: f64,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Calibration {
    /// Map a raw grid coordinate to detuning in half-bandwidth units.
    pub fn to_delta(&self, raw: f64) -> f64 {
        (raw - self.delta_offset) / self.delta_scale
    }

    /// The directly identifiable dip floor `(1 − f²)·d + f²`.
    pub fn dip_floor(&self) -> f64 {
        (1.0 - self.f2) * self.d + self.f2
    }
}

/// Options for [`calibrate_dc`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcFitOptions {
    /// Pin the mode-mismatch fraction (measured independently) and recover
    /// `d` from the fitted dip floor.
    pub known_f2: Option<f64>,
    /// Pin `d` instead and recover `f²`.
    pub known_d: Option<f64>,
    pub fit_gain: bool,
    /// Also fit an additive electronic offset.
    pub fit_baseline: bool,
    pub max_iterations: usize,
    /// Relative step size declaring convergence.
    pub tolerance: f64,
}

impl Default for DcFitOptions {
    fn default() -> Self {
        Self {
            known_f2: None,
            known_d: None,
            fit_gain: true,
            fit_baseline: false,
            max_iterations: 200,
            tolerance: 1e-9,
        }
    }
}

// Parameter slots of the DC model
// gain·(D + x²)/(1 + x²) + baseline, x = (g − off)/scale.
const P_FLOOR: usize = 0;
const P_SCALE: usize = 1;
const P_OFFSET: usize = 2;
const P_GAIN: usize = 3;
const P_BASE: usize = 4;

fn dc_model(theta: &[f64; 5], g: f64) -> f64 {
    let x = (g - theta[P_OFFSET]) / theta[P_SCALE];
    theta[P_GAIN] * (theta[P_FLOOR] + x * x) / (1.0 + x * x) + theta[P_BASE]
}

fn dc_jacobian_row(theta: &[f64; 5], g: f64) -> [f64; 5] {
    let x = (g - theta[P_OFFSET]) / theta[P_SCALE];
    let den = 1.0 + x * x;
    let dfloor = theta[P_GAIN] / den;
    let dmodel_dx = theta[P_GAIN] * 2.0 * x * (1.0 - theta[P_FLOOR]) / (den * den);
    [
        dfloor,
        dmodel_dx * (-x / theta[P_SCALE]),
        dmodel_dx * (-1.0 / theta[P_SCALE]),
        (theta[P_FLOOR] + x * x) / den,
        1.0,
    ]
}

fn dc_cost(theta: &[f64; 5], grid: &[f64], values: &[f64]) -> f64 {
    grid.iter()
        .zip(values)
        .map(|(&g, &y)| {
            let r = dc_model(theta, g) - y;
            r * r
        })
        .sum()
}

/// Calibrate the detuning axis and resonator constants from the DC
/// reflection profile by a damped (Levenberg–Marquardt) least-squares fit.
pub fn calibrate_dc(grid: &[f64], values: &[f64], options: &DcFitOptions) -> Result<Calibration> {
    if grid.len() != values.len() || grid.len() < 8 {
        return Err(Error::InvalidConfig(
            "DC curve needs at least 8 matching grid/value points".into(),
        ));
    }

    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let range = max - min;
    // Lag-1 difference noise estimate; a real dip must clear it.
    let noise = (values
        .windows(2)
        .map(|w| (w[1] - w[0]) * (w[1] - w[0]))
        .sum::<f64>()
        / (values.len() - 1) as f64)
        .sqrt()
        / 2.0f64.sqrt();
    if range <= 0.0 || range < 3.0 * noise {
        return Err(Error::CalibrationFailure(format!(
            "no resonance dip detected (range {range:.3e}, noise {noise:.3e})"
        )));
    }

    // Initial guess: shoulder level, dip position, half width at half depth.
    let i_min = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    let mut shoulder: Vec<f64> = values.to_vec();
    shoulder.sort_by(f64::total_cmp);
    let gain0 = shoulder[shoulder.len() * 9 / 10].max(min + range);
    let half = (values[i_min] + gain0) / 2.0;
    let mut left = grid[0];
    for i in (0..i_min).rev() {
        if values[i] >= half {
            left = grid[i];
            break;
        }
    }
    let mut right = grid[grid.len() - 1];
    for i in i_min..grid.len() {
        if values[i] >= half {
            right = grid[i];
            break;
        }
    }
    let span = (grid[grid.len() - 1] - grid[0]).abs();
    let mut theta = [0.0; 5];
    theta[P_FLOOR] = (values[i_min] / gain0).clamp(1e-3, 0.95);
    theta[P_SCALE] = (0.5 * (right - left).abs()).max(span / grid.len() as f64);
    theta[P_OFFSET] = grid[i_min];
    theta[P_GAIN] = gain0;
    theta[P_BASE] = 0.0;

    let mut active = [true, true, true, options.fit_gain, options.fit_baseline];
    if !options.fit_gain {
        theta[P_GAIN] = 1.0;
    }
    let n_active = active.iter().filter(|&&a| a).count();
    let _ = &mut active;

    let mut lambda = 1e-3;
    let mut cost = dc_cost(&theta, grid, values);
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..options.max_iterations {
        iterations = iter + 1;
        // Normal equations restricted to the active parameters.
        let mut jtj = DMatrix::<f64>::zeros(n_active, n_active);
        let mut jtr = DVector::<f64>::zeros(n_active);
        for (&g, &y) in grid.iter().zip(values) {
            let row = dc_jacobian_row(&theta, g);
            let r = dc_model(&theta, g) - y;
            let mut a = 0;
            for i in 0..5 {
                if !active[i] {
                    continue;
                }
                jtr[a] -= row[i] * r;
                let mut b = 0;
                for j in 0..5 {
                    if !active[j] {
                        continue;
                    }
                    jtj[(a, b)] += row[i] * row[j];
                    b += 1;
                }
                a += 1;
            }
        }

        let mut damped = jtj.clone();
        for i in 0..n_active {
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        let Some(step) = damped.lu().solve(&jtr) else {
            lambda *= 10.0;
            continue;
        };

        let mut trial = theta;
        let mut a = 0;
        for i in 0..5 {
            if active[i] {
                trial[i] += step[a];
                a += 1;
            }
        }
        let feasible = trial[P_SCALE] > 0.0 && (-0.5..=1.5).contains(&trial[P_FLOOR]);
        let trial_cost = if feasible {
            dc_cost(&trial, grid, values)
        } else {
            f64::INFINITY
        };

        if trial_cost < cost {
            let rel_step = (0..n_active)
                .map(|a| step[a].abs())
                .fold(0.0f64, f64::max)
                / theta
                    .iter()
                    .map(|t| t.abs())
                    .fold(0.0f64, f64::max)
                    .max(1.0);
            theta = trial;
            cost = trial_cost;
            lambda = (lambda * 0.3).max(1e-12);
            if rel_step < options.tolerance {
                converged = true;
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    let floor = theta[P_FLOOR].clamp(0.0, 1.0);
    let (d, f2) = match (options.known_f2, options.known_d) {
        (Some(f2), _) => (((floor - f2) / (1.0 - f2)).clamp(0.0, 1.0), f2),
        (None, Some(d)) => {
            let f2 = if d < 1.0 {
                ((floor - d) / (1.0 - d)).clamp(0.0, 0.999_999)
            } else {
                0.0
            };
            (d, f2)
        }
        // With no prior the split is undetermined; attribute the whole
        // floor to the resonator.
        (None, None) => (floor, 0.0),
    };

    Ok(Calibration {
        d,
        f2,
        delta_scale: theta[P_SCALE].abs(),
        delta_offset: theta[P_OFFSET],
        gain: theta[P_GAIN],
        offset: theta[P_BASE],
        residual_rms: (cost / grid.len() as f64).sqrt(),
        iterations,
        converged,
    })
}

/// Weighted linear least-squares solution with SVD diagnostics.
struct WlsSolution {
    coef: DVector<f64>,
    param_cov: DMatrix<f64>,
    condition: f64,
    smallest_sv: f64,
    flagged: bool,
}

const CONDITION_LIMIT: f64 = 1e8;

fn solve_wls(design: &DMatrix<f64>, obs: &DVector<f64>, weights: &DVector<f64>) -> Result<WlsSolution> {
    let n = design.nrows();
    let p = design.ncols();
    if n < p {
        return Err(Error::InvalidConfig(format!(
            "{n} observations cannot determine {p} parameters"
        )));
    }
    let mut xw = design.clone();
    let mut yw = obs.clone();
    for i in 0..n {
        let s = weights[i].max(0.0).sqrt();
        for j in 0..p {
            xw[(i, j)] *= s;
        }
        yw[i] *= s;
    }

    let svd = xw.svd(true, true);
    let u = svd.u.as_ref().expect("svd computed with u");
    let vt = svd.v_t.as_ref().expect("svd computed with v_t");
    let sv = &svd.singular_values;
    let sv_max = sv.iter().cloned().fold(0.0f64, f64::max);
    let sv_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if sv_min > 0.0 { sv_max / sv_min } else { f64::INFINITY };
    let flagged = condition > CONDITION_LIMIT;
    let cutoff = sv_max / CONDITION_LIMIT;

    let uty = u.transpose() * &yw;
    let mut coef = DVector::zeros(p);
    let mut param_cov = DMatrix::zeros(p, p);
    for k in 0..sv.len() {
        if sv[k] <= cutoff {
            continue;
        }
        let vk = vt.row(k).transpose();
        coef += &vk * (uty[k] / sv[k]);
        param_cov += &vk * vk.transpose() / (sv[k] * sv[k]);
    }

    Ok(WlsSolution {
        coef,
        param_cov,
        condition,
        smallest_sv: sv_min,
        flagged,
    })
}

fn weighted_chi2(
    design: &DMatrix<f64>,
    obs: &DVector<f64>,
    weights: &DVector<f64>,
    coef: &DVector<f64>,
    rows: std::ops::Range<usize>,
) -> f64 {
    let fitted = design * coef;
    rows.map(|i| {
        let r = obs[i] - fitted[i];
        weights[i] * r * r
    })
    .sum()
}

/// Recovered quadrature means with their uncertainty.
#[derive(Debug, Clone)]
pub struct MeanFit {
    /// Means in the sideband ordering `(p₊, q₊, p₋, q₋)`.
    pub mean: Vector4<f64>,
    pub se: Vector4<f64>,
    pub param_cov: Matrix4<f64>,
    /// Reduced chi-square of the cosine and sine mean curves.
    pub chi2_cos: f64,
    pub chi2_sin: f64,
    pub condition: f64,
    pub smallest_sv: f64,
    pub rank_flagged: bool,
    pub n_bins: usize,
}

impl MeanFit {
    /// Means and standard errors in the S/A ordering.
    pub fn sa_mean(&self) -> (Vector4<f64>, Vector4<f64>) {
        let m = basis_matrix();
        let mean = m * self.mean;
        let cov = m * self.param_cov * m.transpose();
        let se = Vector4::from_fn(|i, _| cov[(i, i)].max(0.0).sqrt());
        (mean, se)
    }
}

/// Recovered covariance elements (packed upper triangle) with uncertainty.
#[derive(Debug, Clone)]
pub struct CovFit {
    /// Packed elements in [`COV_INDICES`] order, sideband basis.
    pub cov10: SVector<f64, 10>,
    pub se10: SVector<f64, 10>,
    pub param_cov: SMatrix<f64, 10, 10>,
    pub chi2_var_cos: f64,
    pub chi2_var_sin: f64,
    pub chi2_cov: f64,
    pub condition: f64,
    pub smallest_sv: f64,
    pub rank_flagged: bool,
    pub n_bins: usize,
}

/// Result of the opt-in PSD repair of a recovered covariance.
#[derive(Debug, Clone, Copy)]
pub struct PsdProjection {
    pub cov: Matrix4<f64>,
    /// Largest eigenvalue shift applied by the projection.
    pub max_shift: f64,
    /// Whether any shift exceeded that eigenvalue's standard error.
    pub exceeds_se: bool,
}

/// The 10×10 map of packed covariance elements under the S/A basis change.
fn packed_basis_transform() -> SMatrix<f64, 10, 10> {
    let m = basis_matrix();
    SMatrix::<f64, 10, 10>::from_fn(|row, col| {
        let (a, b) = COV_INDICES[row];
        let (j, k) = COV_INDICES[col];
        if j == k {
            m[(a, j)] * m[(b, j)]
        } else {
            m[(a, j)] * m[(b, k)] + m[(a, k)] * m[(b, j)]
        }
    })
}

fn unpack(cov10: &SVector<f64, 10>) -> Matrix4<f64> {
    let mut out = Matrix4::zeros();
    for (idx, &(i, j)) in COV_INDICES.iter().enumerate() {
        out[(i, j)] = cov10[idx];
        out[(j, i)] = cov10[idx];
    }
    out
}

impl CovFit {
    pub fn cov_matrix(&self) -> Matrix4<f64> {
        unpack(&self.cov10)
    }

    pub fn se_matrix(&self) -> Matrix4<f64> {
        unpack(&self.se10)
    }

    /// Packed covariance and standard errors in the S/A basis.
    pub fn sa_cov(&self) -> (SVector<f64, 10>, SVector<f64, 10>) {
        let t = packed_basis_transform();
        let cov10 = t * self.cov10;
        let cov = t * self.param_cov * t.transpose();
        let se = SVector::<f64, 10>::from_fn(|i, _| cov[(i, i)].max(0.0).sqrt());
        (cov10, se)
    }

    /// Opt-in eigenvalue clamping to the PSD cone. The raw estimate stays
    /// the primary output; the projection reports how much it moved.
    pub fn psd_projected(&self) -> PsdProjection {
        let sym = self.cov_matrix();
        let eig = sym.symmetric_eigen();
        let mut max_shift = 0.0f64;
        let mut exceeds_se = false;
        let mut clamped = eig.eigenvalues;
        for i in 0..4 {
            if clamped[i] < 0.0 {
                let shift = -clamped[i];
                max_shift = max_shift.max(shift);
                // Delta-method standard error of this eigenvalue.
                let v = eig.eigenvectors.column(i);
                let mut grad = SVector::<f64, 10>::zeros();
                for (idx, &(a, b)) in COV_INDICES.iter().enumerate() {
                    grad[idx] = if a == b { v[a] * v[a] } else { 2.0 * v[a] * v[b] };
                }
                let se = (grad.transpose() * self.param_cov * grad)[(0, 0)]
                    .max(0.0)
                    .sqrt();
                if shift > se {
                    exceeds_se = true;
                }
                clamped[i] = 0.0;
            }
        }
        let cov = eig.eigenvectors * Matrix4::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        PsdProjection {
            cov,
            max_shift,
            exceeds_se,
        }
    }
}

fn effective_params(calib: &Calibration, params: &ResonatorParams) -> Result<ResonatorParams> {
    ResonatorParams::new(calib.d, params.omega_ratio, calib.f2)
}

/// Fit the 4 quadrature means from the binned first-moment curves by
/// weighted linear least squares on the SQL-normalized coefficient rows.
pub fn fit_first_moments(
    curves: &MomentCurves,
    calib: &Calibration,
    params: &ResonatorParams,
) -> Result<MeanFit> {
    let eff = effective_params(calib, params)?;
    let ratio = curves.samples_per_cov_bin / curves.samples_per_mean_bin;
    let n_mean = curves.mean_bins.len().min(curves.cov_bins.len() * ratio);
    if n_mean < 4 {
        return Err(Error::InvalidConfig(
            "not enough mean bins to fit four means".into(),
        ));
    }

    let mut design = DMatrix::zeros(2 * n_mean, 4);
    let mut obs = DVector::zeros(2 * n_mean);
    let mut weights = DVector::zeros(2 * n_mean);
    for (j, bin) in curves.mean_bins.iter().take(n_mean).enumerate() {
        let delta = calib.to_delta(bin.delta);
        let coeff = coefficients(delta, &eff)?;
        if coeff.sql <= 1e-12 {
            continue; // no reflected LO here; leave the rows weightless
        }
        let norm = (2.0 * coeff.sql).sqrt();
        let cov_bin = &curves.cov_bins[j / ratio];
        let n = bin.n as f64;
        for k in 0..4 {
            design[(j, k)] = coeff.c_cos[k] / norm;
            design[(n_mean + j, k)] = coeff.c_sin[k] / norm;
        }
        obs[j] = bin.mean_cos;
        obs[n_mean + j] = bin.mean_sin;
        weights[j] = n / cov_bin.var_cos.max(1e-12);
        weights[n_mean + j] = n / cov_bin.var_sin.max(1e-12);
    }

    let sol = solve_wls(&design, &obs, &weights)?;
    let dof = (n_mean as f64 - 2.0).max(1.0);
    let chi2_cos = weighted_chi2(&design, &obs, &weights, &sol.coef, 0..n_mean) / dof;
    let chi2_sin =
        weighted_chi2(&design, &obs, &weights, &sol.coef, n_mean..2 * n_mean) / dof;

    Ok(MeanFit {
        mean: Vector4::from_fn(|i, _| sol.coef[i]),
        se: Vector4::from_fn(|i, _| sol.param_cov[(i, i)].max(0.0).sqrt()),
        param_cov: Matrix4::from_fn(|i, j| sol.param_cov[(i, j)]),
        chi2_cos,
        chi2_sin,
        condition: sol.condition,
        smallest_sv: sol.smallest_sv,
        rank_flagged: sol.flagged,
        n_bins: n_mean,
    })
}

/// Quadratic design row: coefficients of the packed covariance elements in
/// `aᵀ σ b` for row vectors `a`, `b`.
fn quad_row(a: &Vector4<f64>, b: &Vector4<f64>) -> [f64; 10] {
    let mut row = [0.0; 10];
    for (idx, &(j, k)) in COV_INDICES.iter().enumerate() {
        row[idx] = if j == k {
            a[j] * b[j]
        } else {
            a[j] * b[k] + a[k] * b[j]
        };
    }
    row
}

/// Fit the 10 covariance elements from the binned second-moment curves,
/// subtracting the known vacuum block as an offset.
pub fn fit_second_moments(
    curves: &MomentCurves,
    calib: &Calibration,
    params: &ResonatorParams,
) -> Result<CovFit> {
    let eff = effective_params(calib, params)?;
    let n = curves.cov_bins.len();
    if 3 * n < 10 {
        return Err(Error::InvalidConfig(
            "not enough covariance bins to fit ten elements".into(),
        ));
    }

    // The local-mean subtraction of the binning pipeline shrinks every
    // second moment by exactly (1 − 1/bin_mean); undo it so the recovered
    // elements are unbiased.
    let kappa = 1.0 - 1.0 / curves.samples_per_mean_bin as f64;

    let mut design = DMatrix::zeros(3 * n, 10);
    let mut obs = DVector::zeros(3 * n);
    let mut weights = DVector::zeros(3 * n);
    for (j, bin) in curves.cov_bins.iter().enumerate() {
        let delta = calib.to_delta(bin.delta);
        let coeff = coefficients(delta, &eff)?;
        if coeff.sql <= 1e-12 {
            continue;
        }
        let scale = 2.0 * coeff.sql;
        let cc = coeff.c_cos / scale.sqrt();
        let cs = coeff.c_sin / scale.sqrt();
        let vac = coeff.vac_cov / scale;
        let var_cos = bin.var_cos / kappa;
        let var_sin = bin.var_sin / kappa;
        let cov_cs = bin.cov_cs / kappa;

        let m = bin.n as f64 - 1.0;
        for (k, v) in quad_row(&cc, &cc).into_iter().enumerate() {
            design[(j, k)] = v;
        }
        obs[j] = var_cos - vac[(0, 0)];
        weights[j] = m / (2.0 * var_cos * var_cos).max(1e-12);

        for (k, v) in quad_row(&cs, &cs).into_iter().enumerate() {
            design[(n + j, k)] = v;
        }
        obs[n + j] = var_sin - vac[(1, 1)];
        weights[n + j] = m / (2.0 * var_sin * var_sin).max(1e-12);

        for (k, v) in quad_row(&cc, &cs).into_iter().enumerate() {
            design[(2 * n + j, k)] = v;
        }
        obs[2 * n + j] = cov_cs - vac[(0, 1)];
        weights[2 * n + j] = m / (var_cos * var_sin + cov_cs * cov_cs).max(1e-12);
    }

    let sol = solve_wls(&design, &obs, &weights)?;
    let cov10 = SVector::<f64, 10>::from_fn(|i, _| sol.coef[i]);
    let se10 = SVector::<f64, 10>::from_fn(|i, _| sol.param_cov[(i, i)].max(0.0).sqrt());

    // A diagonal variance significantly below zero cannot come from any
    // quantum state; the model does not describe these data.
    for (idx, &(i, j)) in COV_INDICES.iter().enumerate() {
        if i == j && cov10[idx] < -3.0 * se10[idx] {
            return Err(Error::ModelMismatch(format!(
                "recovered variance of quadrature {i} is {:.3} ± {:.3}",
                cov10[idx], se10[idx]
            )));
        }
    }

    let dof = (n as f64 - 10.0 / 3.0).max(1.0);
    Ok(CovFit {
        cov10,
        se10,
        param_cov: SMatrix::<f64, 10, 10>::from_fn(|i, j| sol.param_cov[(i, j)]),
        chi2_var_cos: weighted_chi2(&design, &obs, &weights, &sol.coef, 0..n) / dof,
        chi2_var_sin: weighted_chi2(&design, &obs, &weights, &sol.coef, n..2 * n) / dof,
        chi2_cov: weighted_chi2(&design, &obs, &weights, &sol.coef, 2 * n..3 * n) / dof,
        condition: sol.condition,
        smallest_sv: sol.smallest_sv,
        rank_flagged: sol.flagged,
        n_bins: n,
    })
}

/// Numerical-rank diagnostics of the noiseless fit designs over a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankReport {
    /// Relative singular-value threshold used for the rank decision.
    pub threshold: f64,
    pub first_singular_values: Vec<f64>,
    pub first_rank: usize,
    pub second_singular_values: Vec<f64>,
    pub second_rank: usize,
}

/// Singular-value spectra of the first- (4-column) and second-moment
/// (10-column) designs over `grid`, with numerical ranks at the fixed
/// relative threshold 10⁻⁶. Rank 10 means the detection constitutes a
/// complete second-moment measurement of the two-mode state.
pub fn identifiability_report(params: &ResonatorParams, grid: &[f64]) -> Result<RankReport> {
    params.validate()?;
    let n = grid.len();
    if n < 4 {
        return Err(Error::InvalidConfig("rank grid needs ≥ 4 points".into()));
    }
    let mut first = DMatrix::zeros(2 * n, 4);
    let mut second = DMatrix::zeros(3 * n, 10);
    for (j, &delta) in grid.iter().enumerate() {
        let coeff = coefficients(delta, params)?;
        if coeff.sql <= 1e-12 {
            continue;
        }
        let norm = (2.0 * coeff.sql).sqrt();
        let cc = coeff.c_cos / norm;
        let cs = coeff.c_sin / norm;
        for k in 0..4 {
            first[(j, k)] = cc[k];
            first[(n + j, k)] = cs[k];
        }
        for (k, v) in quad_row(&cc, &cc).into_iter().enumerate() {
            second[(j, k)] = v;
        }
        for (k, v) in quad_row(&cs, &cs).into_iter().enumerate() {
            second[(n + j, k)] = v;
        }
        for (k, v) in quad_row(&cc, &cs).into_iter().enumerate() {
            second[(2 * n + j, k)] = v;
        }
    }

    let threshold = 1e-6;
    let spectrum = |m: DMatrix<f64>| -> (Vec<f64>, usize) {
        let svd = m.svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let max = sv.first().cloned().unwrap_or(0.0);
        let rank = sv.iter().filter(|&&s| s > threshold * max).count();
        (sv, rank)
    };
    let (first_singular_values, first_rank) = spectrum(first);
    let (second_singular_values, second_rank) = spectrum(second);

    Ok(RankReport {
        threshold,
        first_singular_values,
        first_rank,
        second_singular_values,
        second_rank,
    })
}

/// Complete two-stage reconstruction output.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub calibration: Calibration,
    pub means: MeanFit,
    pub covariances: CovFit,
}

/// Run the full pipeline on one scan: calibrate the DC profile (with `f²`
/// pinned when known), bin the records, and fit both moment sets.
pub fn fit_scan(
    records: &[crate::scan::ScanRecord],
    dc_grid: &[f64],
    dc_values: &[f64],
    omega_ratio: f64,
    known_f2: Option<f64>,
    config: &crate::scan::ScanConfig,
) -> Result<FitResult> {
    let calib = calibrate_dc(
        dc_grid,
        dc_values,
        &DcFitOptions {
            known_f2,
            ..DcFitOptions::default()
        },
    )?;
    let curves = crate::scan::bin_moments(records, config)?;
    let params = ResonatorParams::new(calib.d, omega_ratio, calib.f2)?;
    let means = fit_first_moments(&curves, &calib, &params)?;
    let covariances = fit_second_moments(&curves, &calib, &params)?;
    Ok(FitResult {
        calibration: calib,
        means,
        covariances,
    })
}
