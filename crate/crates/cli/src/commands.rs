//! Implementations of the CLI subcommands.

use std::f64::consts::TAU;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use rdsim::estimator::{
    calibrate_dc, fit_first_moments, fit_second_moments, identifiability_report, Calibration,
    CovFit, DcFitOptions, MeanFit, RankReport, COV_INDICES,
};
use rdsim::gaussian::{Basis, TwoModeGaussian};
use rdsim::measurement::{coefficients, predict_moments, theta_projection};
use rdsim::scan::{bin_moments, dc_profile, simulate_scan, MomentCurves, ScanConfig};
use rdsim::transfer::{transfer_curve, ResonatorParams};
use rdsim::PhaseModSpec;

use crate::config::RunConfig;
use crate::io::{read_dc_csv, read_scan_csv, write_atomic, write_json_atomic, CsvTable};

/// Emit the transfer and observable coefficient curves, in both modal bases.
pub fn cmd_coeffs(config: &RunConfig, out: &Path) -> Result<()> {
    config.validate()?;
    let grid = config.parse_grid()?;
    let params = &config.resonator;

    let curve = transfer_curve(&grid, params.d)?;
    let mut side = CsvTable::new(
        "coeffs",
        1,
        "delta,re_r,im_r,T,psi,x_p,y_p,x_m,y_m,sql",
    );
    let mut sa = CsvTable::new("coeffs-sa", 1, "delta,x_s,y_s,x_a,y_a,sql");
    for sample in &curve {
        let c = coefficients(sample.delta, params)?;
        let g = params.effective_coeffs(sample.delta)?;
        side.row(&[
            sample.delta,
            sample.r.re,
            sample.r.im,
            sample.transmission,
            sample.psi,
            g.plus.re,
            g.plus.im,
            g.minus.re,
            g.minus.im,
            c.sql,
        ]);
        let (sa_cos, _) = c.sa_coefficients();
        sa.row(&[sample.delta, sa_cos[0], sa_cos[1], sa_cos[2], sa_cos[3], c.sql]);
    }
    write_atomic(&out.join("coeffs.csv"), &side.finish())?;
    write_atomic(&out.join("coeffs_sa.csv"), &sa.finish())?;

    if config.theta_count > 0 {
        let state = config.state.build()?;
        let mut tomo = CsvTable::new("tomo", 1, "delta,theta,mean,variance");
        for &delta in &grid {
            let m = predict_moments(&state, delta, params, config.normalized)?;
            for k in 0..config.theta_count {
                let theta = TAU * k as f64 / config.theta_count as f64;
                let (mean, var) = theta_projection(&m, theta);
                tomo.row(&[delta, theta, mean, var]);
            }
        }
        write_atomic(&out.join("tomo.csv"), &tomo.finish())?;
    }

    println!(
        "coeffs: {} grid points -> {}",
        grid.len(),
        out.display()
    );
    Ok(())
}

fn write_scan_outputs(
    out: &Path,
    records: &[rdsim::ScanRecord],
    curves: &MomentCurves,
    params: &ResonatorParams,
) -> Result<()> {
    let mut scan = CsvTable::new("scan", 1, "index,delta,j_cos,j_sin");
    for r in records {
        scan.row_indexed(r.index, &[r.delta, r.j_cos, r.j_sin]);
    }
    write_atomic(&out.join("scan.csv"), &scan.finish())?;

    let mut means = CsvTable::new("means", 1, "delta,mean_c,mean_s,n");
    for b in &curves.mean_bins {
        means.row(&[b.delta, b.mean_cos, b.mean_sin, b.n as f64]);
    }
    write_atomic(&out.join("means.csv"), &means.finish())?;

    let ratio = curves.samples_per_cov_bin / curves.samples_per_mean_bin;
    let mut moments = CsvTable::new(
        "moments",
        1,
        "delta,mean_c,mean_s,var_c,var_s,cov_cs,sql",
    );
    for (j, b) in curves.cov_bins.iter().enumerate() {
        let group = &curves.mean_bins[j * ratio..(j + 1) * ratio];
        let mean_c = group.iter().map(|m| m.mean_cos).sum::<f64>() / ratio as f64;
        let mean_s = group.iter().map(|m| m.mean_sin).sum::<f64>() / ratio as f64;
        moments.row(&[
            b.delta,
            mean_c,
            mean_s,
            b.var_cos,
            b.var_sin,
            b.cov_cs,
            params.sql_level(b.delta)?,
        ]);
    }
    write_atomic(&out.join("moments.csv"), &moments.finish())?;
    Ok(())
}

/// Run the full forward pipeline: raw scan, binned moments, DC profile.
pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<()> {
    config.validate()?;
    let state = config.state.build()?;
    let records = simulate_scan(&state, &config.resonator, &config.scan)?;
    let curves = bin_moments(&records, &config.scan)?;
    write_scan_outputs(out, &records, &curves, &config.resonator)?;

    let grid = config.parse_grid()?;
    let dc = dc_profile(&config.resonator, &grid, &config.dc)?;
    let mut dc_csv = CsvTable::new("dc", 1, "grid,value");
    for (&g, &v) in grid.iter().zip(&dc) {
        dc_csv.row(&[g, v]);
    }
    write_atomic(&out.join("dc.csv"), &dc_csv.finish())?;

    println!(
        "simulate: {} samples, {} mean bins, {} cov bins -> {}",
        records.len(),
        curves.mean_bins.len(),
        curves.cov_bins.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct BasisBlock {
    mean: [f64; 4],
    mean_se: [f64; 4],
    cov10: [f64; 10],
    cov10_se: [f64; 10],
}

fn basis_block(means: &MeanFit, covs: &CovFit, basis: Basis) -> BasisBlock {
    let (mean, mean_se, cov10, cov10_se) = match basis {
        Basis::Sideband => (means.mean, means.se, covs.cov10, covs.se10),
        Basis::SymAntisym => {
            let (m, s) = means.sa_mean();
            let (c, cs) = covs.sa_cov();
            (m, s, c, cs)
        }
    };
    BasisBlock {
        mean: mean.into(),
        mean_se: mean_se.into(),
        cov10: cov10.into(),
        cov10_se: cov10_se.into(),
    }
}

#[derive(Serialize)]
struct Chi2Block {
    mean_cos: f64,
    mean_sin: f64,
    var_cos: f64,
    var_sin: f64,
    cov_cs: f64,
}

#[derive(Serialize)]
struct DesignBlock {
    mean_condition: f64,
    mean_smallest_sv: f64,
    mean_rank_flagged: bool,
    cov_condition: f64,
    cov_smallest_sv: f64,
    cov_rank_flagged: bool,
}

#[derive(Serialize)]
struct PsdBlock {
    max_shift: f64,
    exceeds_se: bool,
}

#[derive(Serialize)]
struct FitJson {
    format: String,
    calibration: Calibration,
    sideband: BasisBlock,
    sa: BasisBlock,
    chi2: Chi2Block,
    design: DesignBlock,
    psd: PsdBlock,
    rank: RankReport,
}

fn assemble_fit_json(
    calib: Calibration,
    means: &MeanFit,
    covs: &CovFit,
    rank: RankReport,
) -> FitJson {
    let psd = covs.psd_projected();
    FitJson {
        format: "fit/1".into(),
        calibration: calib,
        sideband: basis_block(means, covs, Basis::Sideband),
        sa: basis_block(means, covs, Basis::SymAntisym),
        chi2: Chi2Block {
            mean_cos: means.chi2_cos,
            mean_sin: means.chi2_sin,
            var_cos: covs.chi2_var_cos,
            var_sin: covs.chi2_var_sin,
            cov_cs: covs.chi2_cov,
        },
        design: DesignBlock {
            mean_condition: means.condition,
            mean_smallest_sv: means.smallest_sv,
            mean_rank_flagged: means.rank_flagged,
            cov_condition: covs.condition,
            cov_smallest_sv: covs.smallest_sv,
            cov_rank_flagged: covs.rank_flagged,
        },
        psd: PsdBlock {
            max_shift: psd.max_shift,
            exceeds_se: psd.exceeds_se,
        },
        rank,
    }
}

fn print_fit_summary(config: &RunConfig, means: &MeanFit, covs: &CovFit) {
    let block = basis_block(means, covs, config.basis);
    let labels = match config.basis {
        Basis::Sideband => ["p+", "q+", "p-", "q-"],
        Basis::SymAntisym => ["p_s", "q_s", "p_a", "q_a"],
    };
    for k in 0..4 {
        println!(
            "  <{}> = {:+.4} ± {:.4}",
            labels[k], block.mean[k], block.mean_se[k]
        );
    }
    for (idx, &(i, j)) in COV_INDICES.iter().enumerate() {
        println!(
            "  cov({},{}) = {:+.4} ± {:.4}",
            labels[i], labels[j], block.cov10[idx], block.cov10_se[idx]
        );
    }
}

/// Reconstruct the state from a scan file plus either a DC profile or a
/// previously saved calibration.
pub fn cmd_fit(
    config: &RunConfig,
    scan_path: &Path,
    dc_path: Option<&Path>,
    calib_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let records = read_scan_csv(scan_path)?;
    let calib: Calibration = match (calib_path, dc_path) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading calibration {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing calibration {}", path.display()))?
        }
        (None, Some(path)) => {
            let (grid, values) = read_dc_csv(path)?;
            calibrate_dc(
                &grid,
                &values,
                &DcFitOptions {
                    known_f2: Some(config.resonator.f2),
                    ..DcFitOptions::default()
                },
            )?
        }
        (None, None) => anyhow::bail!("fit needs either --dc or --calib"),
    };

    let curves = bin_moments(&records, &config.scan)?;
    let params = ResonatorParams::new(calib.d, config.resonator.omega_ratio, calib.f2)?;
    let means = fit_first_moments(&curves, &calib, &params)?;
    let covs = fit_second_moments(&curves, &calib, &params)?;
    let rank = identifiability_report(&params, &config.parse_grid()?)?;

    let json = assemble_fit_json(calib, &means, &covs, rank);
    write_json_atomic(&out.join("fit.json"), &json)?;
    println!(
        "fit: {} records, calibration d={:.4} f2={:.4} (rms {:.2e})",
        records.len(),
        calib.d,
        calib.f2,
        calib.residual_rms
    );
    print_fit_summary(config, &means, &covs);
    Ok(())
}

#[derive(Serialize)]
struct RoundtripJson {
    format: String,
    seed: u64,
    truth_sideband: BasisBlock,
    recovered: FitJson,
    z_mean: [f64; 4],
    z_cov10: [f64; 10],
    max_abs_z: f64,
}

fn truth_block(state: &TwoModeGaussian) -> BasisBlock {
    let side = state.to_basis(Basis::Sideband);
    let mut cov10 = [0.0; 10];
    for (idx, &(i, j)) in COV_INDICES.iter().enumerate() {
        cov10[idx] = side.cov()[(i, j)];
    }
    BasisBlock {
        mean: (*side.mean()).into(),
        mean_se: [0.0; 4],
        cov10,
        cov10_se: [0.0; 10],
    }
}

/// Simulate a scan at known truth, reconstruct it, and report z-scores.
pub fn cmd_roundtrip(config: &RunConfig, out: &Path) -> Result<()> {
    config.validate()?;
    let state = config.state.build()?;
    let records = simulate_scan(&state, &config.resonator, &config.scan)?;
    let grid = config.parse_grid()?;
    let dc = dc_profile(&config.resonator, &grid, &config.dc)?;

    let fit = rdsim::estimator::fit_scan(
        &records,
        &grid,
        &dc,
        config.resonator.omega_ratio,
        Some(config.resonator.f2),
        &config.scan,
    )?;
    let rank = identifiability_report(&config.resonator, &grid)?;

    let truth = truth_block(&state);
    let mut z_mean = [0.0; 4];
    for k in 0..4 {
        z_mean[k] = (fit.means.mean[k] - truth.mean[k]) / fit.means.se[k].max(1e-300);
    }
    let mut z_cov = [0.0; 10];
    for k in 0..10 {
        z_cov[k] =
            (fit.covariances.cov10[k] - truth.cov10[k]) / fit.covariances.se10[k].max(1e-300);
    }
    let max_abs_z = z_mean
        .iter()
        .chain(z_cov.iter())
        .fold(0.0f64, |m, z| m.max(z.abs()));

    let json = RoundtripJson {
        format: "roundtrip/1".into(),
        seed: config.scan.seed,
        truth_sideband: truth,
        recovered: assemble_fit_json(fit.calibration, &fit.means, &fit.covariances, rank),
        z_mean,
        z_cov10: z_cov,
        max_abs_z,
    };
    write_json_atomic(&out.join("roundtrip.json"), &json)?;
    println!(
        "roundtrip: seed {} max |z| = {:.2} over 14 moments",
        config.scan.seed, max_abs_z
    );
    print_fit_summary(config, &fit.means, &fit.covariances);
    Ok(())
}

#[derive(Serialize)]
struct RankJson {
    format: String,
    resonator: ResonatorParams,
    grid: String,
    report: RankReport,
}

/// Identifiability diagnostics of the noiseless designs.
pub fn cmd_rank(config: &RunConfig, out: &Path) -> Result<()> {
    config.validate()?;
    let report = identifiability_report(&config.resonator, &config.parse_grid()?)?;
    println!(
        "rank: first-moment design {} / 4, second-moment design {} / 10",
        report.first_rank, report.second_rank
    );
    let json = RankJson {
        format: "rank/1".into(),
        resonator: config.resonator,
        grid: config.grid.clone(),
        report,
    };
    write_json_atomic(&out.join("rank.json"), &json)?;
    Ok(())
}

/// Sweep the modulation phase and fit the first moments of each state.
pub fn cmd_phi_sweep(config: &RunConfig, out: &Path) -> Result<()> {
    config.validate()?;
    let grid = config.parse_grid()?;
    let dc = dc_profile(&config.resonator, &grid, &config.dc)?;
    let calib = calibrate_dc(
        &grid,
        &dc,
        &DcFitOptions {
            known_f2: Some(config.resonator.f2),
            ..DcFitOptions::default()
        },
    )?;
    let params =
        ResonatorParams::new(calib.d, config.resonator.omega_ratio, calib.f2)?;

    let sweep = config.phi_sweep;
    let mut table = CsvTable::new(
        "phi-sweep",
        1,
        "phi,p_s,q_s,p_a,q_a,se_p_s,se_q_s,se_p_a,se_q_a",
    );
    let mut radius_sum = 0.0;
    for k in 0..sweep.count {
        let phi = TAU * k as f64 / sweep.count as f64;
        let state = TwoModeGaussian::phase_modulated(&PhaseModSpec::new(
            sweep.s,
            phi,
            sweep.excess_p,
            sweep.excess_q,
        )?)?;
        let scan_config = ScanConfig {
            seed: config.scan.seed.wrapping_add(k as u64),
            ..config.scan
        };
        let records = simulate_scan(&state, &config.resonator, &scan_config)?;
        let curves = bin_moments(&records, &scan_config)?;
        let fit = fit_first_moments(&curves, &calib, &params)?;
        let (sa, se) = fit.sa_mean();
        radius_sum += (sa[1] * sa[1] + sa[2] * sa[2]).sqrt();
        table.row(&[phi, sa[0], sa[1], sa[2], sa[3], se[0], se[1], se[2], se[3]]);
    }
    write_atomic(&out.join("phi_sweep.csv"), &table.finish())?;
    println!(
        "phi-sweep: {} states at s = {}, mean fitted radius {:.3}",
        sweep.count,
        sweep.s,
        radius_sum / sweep.count as f64
    );
    Ok(())
}

