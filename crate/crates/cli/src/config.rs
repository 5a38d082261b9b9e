//! Run configuration: JSON file plus one-to-one flag overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rdsim::gaussian::Basis;
use rdsim::scan::{DcOptions, ScanConfig};
use rdsim::{PhaseModSpec, ResonatorParams, TwoModeGaussian};

/// Input state selector.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StateSpec {
    Vacuum,
    Thermal {
        n_excess: f64,
    },
    PhaseMod {
        s: f64,
        phi: f64,
        #[serde(default)]
        excess_p: f64,
        #[serde(default)]
        excess_q: f64,
    },
    State {
        basis: Basis,
        mean: [f64; 4],
        cov: [[f64; 4]; 4],
    },
    File {
        path: PathBuf,
    },
}

impl StateSpec {
    pub fn build(&self) -> Result<TwoModeGaussian> {
        Ok(match self {
            StateSpec::Vacuum => TwoModeGaussian::vacuum(),
            StateSpec::Thermal { n_excess } => TwoModeGaussian::thermal(*n_excess)?,
            StateSpec::PhaseMod {
                s,
                phi,
                excess_p,
                excess_q,
            } => TwoModeGaussian::phase_modulated(&PhaseModSpec::new(
                *s, *phi, *excess_p, *excess_q,
            )?)?,
            StateSpec::State { basis, mean, cov } => {
                let json = serde_json::json!({ "basis": basis, "mean": mean, "cov": cov });
                serde_json::from_value(json).context("invalid inline state")?
            }
            StateSpec::File { path } => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading state file {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing state file {}", path.display()))?
            }
        })
    }
}

/// Configuration of the phase-sweep experiment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhiSweepConfig {
    pub count: usize,
    pub s: f64,
    #[serde(default)]
    pub excess_p: f64,
    #[serde(default)]
    pub excess_q: f64,
}

impl Default for PhiSweepConfig {
    fn default() -> Self {
        Self {
            count: 14,
            s: 31.3,
            excess_p: 0.0,
            excess_q: 0.0,
        }
    }
}

/// Complete run configuration. Every field has a default, so a config file
/// may specify only what it changes; flags override file values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub resonator: ResonatorParams,
    pub scan: ScanConfig,
    pub state: StateSpec,
    /// Detuning grid as `start:end:count`.
    pub grid: String,
    pub dc: DcOptions,
    pub phi_sweep: PhiSweepConfig,
    /// Θ values per detuning in the tomography-grid export (0 disables).
    pub theta_count: usize,
    /// Whether predicted-moment exports are SQL-normalized.
    pub normalized: bool,
    /// Basis used for printed summaries: "sideband" or "sa".
    pub basis: Basis,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            resonator: ResonatorParams {
                d: 0.05,
                omega_ratio: 2.9,
                f2: 0.15,
            },
            scan: ScanConfig::default(),
            state: StateSpec::PhaseMod {
                s: 12.0,
                phi: 1.2,
                excess_p: 0.25,
                excess_q: 0.28,
            },
            grid: "-8:8:401".into(),
            dc: DcOptions::default(),
            phi_sweep: PhiSweepConfig::default(),
            theta_count: 0,
            normalized: true,
            basis: Basis::SymAntisym,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.resonator.validate()?;
        self.scan.validate()?;
        self.parse_grid()?;
        Ok(())
    }

    /// Expand the `start:end:count` grid specification.
    pub fn parse_grid(&self) -> Result<Vec<f64>> {
        parse_grid_spec(&self.grid)
    }
}

pub fn parse_grid_spec(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must be start:end:count, got {spec:?}");
    }
    let start: f64 = parts[0].parse().context("grid start")?;
    let end: f64 = parts[1].parse().context("grid end")?;
    let count: usize = parts[2].parse().context("grid count")?;
    if count < 2 {
        bail!("grid count must be at least 2, got {count}");
    }
    if !(end > start) {
        bail!("grid end must exceed start");
    }
    Ok((0..count)
        .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
        .collect())
}

pub fn parse_basis(name: &str) -> Result<Basis> {
    match name {
        "sideband" => Ok(Basis::Sideband),
        "sa" => Ok(Basis::SymAntisym),
        other => bail!("basis must be 'sideband' or 'sa', got {other:?}"),
    }
}
