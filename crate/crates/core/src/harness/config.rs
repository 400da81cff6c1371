//! Scenario and sweep configuration.
//!
//! Configs are TOML documents with a fixed, documented key set; unknown keys
//! are rejected with the offending path. Defaults: `sample_interval =
//! horizon/200`, `sigma = 0.4`, `retry_limit = 8`, `r = 3`, seed 0. A
//! `[sweep]` table turns the document into a sweep over the listed axes.

use super::generators::InitialData;
use crate::mesh::Grid;
use crate::model::ModelParams;
use crate::stepper::{Formulation, StepControl};
use crate::{Error, Result};
use serde::Deserialize;
use std::path::PathBuf;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: RawGrid,
    params: RawParams,
    initial: RawInitial,
    run: RawRun,
    #[serde(default)]
    control: RawControl,
    #[serde(default)]
    audit: RawAudit,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    sweep: Option<RawSweep>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    chi: f64,
    gamma: f64,
    beta: f64,
    v_floor: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    u: InitialData,
    v: InitialData,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    horizon: f64,
    formulation: Option<String>,
    sample_interval: Option<f64>,
    r: Option<f64>,
    monitor_cap: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    sigma: Option<f64>,
    dt_min: Option<f64>,
    dt_max: Option<f64>,
    retry_limit: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAudit {
    c_gn: Option<f64>,
    c_s: Option<f64>,
    calibration_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    csv: Option<PathBuf>,
    constants: Option<PathBuf>,
    snapshot_u: Option<PathBuf>,
    snapshot_v: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    #[serde(default)]
    chi: Vec<f64>,
    #[serde(default)]
    gamma: Vec<f64>,
    #[serde(default)]
    beta: Vec<f64>,
    #[serde(default)]
    v0_amplitude: Vec<f64>,
    #[serde(default)]
    u0_mass: Vec<f64>,
    max_points: Option<usize>,
    parallel: Option<usize>,
    csv: Option<PathBuf>,
}

/// Output file locations of a scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub constants: PathBuf,
    pub snapshot_u: PathBuf,
    pub snapshot_v: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            csv: "diagnostics.csv".into(),
            constants: "constants.txt".into(),
            snapshot_u: "final_u.snap".into(),
            snapshot_v: "final_v.snap".into(),
        }
    }
}

/// Fully validated single-scenario configuration.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub grid: Grid,
    pub chi: f64,
    pub gamma: f64,
    pub beta: f64,
    pub v_floor: f64,
    pub initial_u: InitialData,
    pub initial_v: InitialData,
    pub formulation: Formulation,
    pub horizon: f64,
    pub sample_interval: f64,
    pub monitor_r: f64,
    pub monitor_cap: Option<f64>,
    pub seed: u64,
    pub control: StepControl,
    /// Calibrated interpolation constant; `None` means calibrate at run
    /// start from the seed.
    pub c_gn: Option<f64>,
    /// Heat-semigroup constant; `None` leaves `L₃` out of the report.
    pub c_s: Option<f64>,
    pub calibration_samples: usize,
    pub output: OutputPaths,
}

impl ScenarioConfig {
    /// Model parameters of this scenario (without the run-start `v0_max`).
    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.chi, self.gamma, self.beta)?.with_v_floor(self.v_floor)
    }
}

/// Sweep over a cartesian product of parameter axes.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub base: ScenarioConfig,
    pub chi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub v0_amplitude: Vec<f64>,
    pub u0_mass: Vec<f64>,
    pub max_points: usize,
    pub parallel: usize,
    pub csv: PathBuf,
}

impl SweepConfig {
    /// Cartesian product size (empty axes count as one choice).
    pub fn n_points(&self) -> usize {
        let axis = |v: &Vec<f64>| v.len().max(1);
        axis(&self.chi)
            * axis(&self.gamma)
            * axis(&self.beta)
            * axis(&self.v0_amplitude)
            * axis(&self.u0_mass)
    }
}

/// Either a single scenario or a sweep.
#[derive(Debug, Clone)]
pub enum ParsedConfig {
    Scenario(ScenarioConfig),
    Sweep(SweepConfig),
}

/// Parse and validate a config document.
pub fn parse_config(text: &str) -> Result<ParsedConfig> {
    parse_config_with_overrides(text, &[])
}

/// Parse a config with `key.path=value` overrides applied before
/// validation; each override replaces exactly one key.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<ParsedConfig> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("<document>", e.to_string()))?;
    for entry in overrides {
        apply_override(&mut table, entry)?;
    }
    let raw: RawConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| Error::config("<document>", e.to_string()))?;
    validate(raw)
}

fn apply_override(table: &mut toml::Table, entry: &str) -> Result<()> {
    let (path, value) = entry
        .split_once('=')
        .ok_or_else(|| Error::config(entry, "override must look like key.path=value"))?;
    let parsed: toml::Value = match value.parse::<toml::Value>() {
        Ok(v) => v,
        Err(_) => toml::Value::String(value.to_string()),
    };
    let segments: Vec<&str> = path.trim().split('.').collect();
    if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(Error::config(path, "empty key path"));
    }
    let mut cursor = table;
    for seg in &segments[..segments.len() - 1] {
        cursor = cursor
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::config(path.trim(), format!("`{seg}` is not a table")))?;
    }
    cursor.insert(segments[segments.len() - 1].to_string(), parsed);
    Ok(())
}

fn validate(raw: RawConfig) -> Result<ParsedConfig> {
    let grid = Grid::new(raw.grid.nx, raw.grid.ny, raw.grid.lx, raw.grid.ly)
        .map_err(|e| Error::config("grid", e.to_string()))?;

    // The scenario model must satisfy the assumptions, chi > 0 included;
    // chi = 0 oracle runs are internal to the harness.
    if !(raw.params.chi > 0.0) {
        return Err(Error::config(
            "params.chi",
            format!("chi must be positive, got {}", raw.params.chi),
        ));
    }
    let mut params = ModelParams::new(raw.params.chi, raw.params.gamma, raw.params.beta)
        .map_err(|e| Error::config("params", e.to_string()))?;
    if let Some(vf) = raw.params.v_floor {
        params = params
            .with_v_floor(vf)
            .map_err(|e| Error::config("params.v_floor", e.to_string()))?;
    }

    let formulation = match raw.run.formulation.as_deref() {
        None | Some("original") => Formulation::Original,
        Some("transformed") => Formulation::Transformed,
        Some(other) => {
            return Err(Error::config(
                "run.formulation",
                format!("expected `original` or `transformed`, got `{other}`"),
            ))
        }
    };
    if !(raw.run.horizon >= 0.0) || !raw.run.horizon.is_finite() {
        return Err(Error::config(
            "run.horizon",
            format!("horizon must be a finite non-negative time, got {}", raw.run.horizon),
        ));
    }
    let sample_interval = match raw.run.sample_interval {
        Some(si) => {
            if !(si > 0.0) {
                return Err(Error::config(
                    "run.sample_interval",
                    format!("must be positive, got {si}"),
                ));
            }
            si
        }
        None => {
            if raw.run.horizon > 0.0 {
                raw.run.horizon / 200.0
            } else {
                1.0
            }
        }
    };
    let monitor_r = raw.run.r.unwrap_or(3.0);
    if !(monitor_r > 2.0) {
        return Err(Error::config(
            "run.r",
            format!("the W^{{1,r}} monitor needs r > 2, got {monitor_r}"),
        ));
    }
    if let Some(cap) = raw.run.monitor_cap {
        if !(cap > 0.0) {
            return Err(Error::config(
                "run.monitor_cap",
                format!("must be positive, got {cap}"),
            ));
        }
    }

    let defaults = StepControl::default();
    let control = StepControl {
        sigma: raw.control.sigma.unwrap_or(defaults.sigma),
        dt_min: raw.control.dt_min.unwrap_or(defaults.dt_min),
        dt_max: raw.control.dt_max.unwrap_or(defaults.dt_max),
        retry_limit: raw.control.retry_limit.unwrap_or(defaults.retry_limit),
    };
    control
        .validate()
        .map_err(|e| Error::config("control", e.to_string()))?;

    if let Some(c_gn) = raw.audit.c_gn {
        if !(c_gn > 0.0) {
            return Err(Error::config(
                "audit.c_gn",
                format!("must be positive, got {c_gn}"),
            ));
        }
    }
    if let Some(c_s) = raw.audit.c_s {
        if !(c_s > 0.0) {
            return Err(Error::config(
                "audit.c_s",
                format!("must be positive, got {c_s}"),
            ));
        }
    }
    let calibration_samples = raw.audit.calibration_samples.unwrap_or(128);
    if calibration_samples < 100 {
        return Err(Error::config(
            "audit.calibration_samples",
            format!("calibration needs at least 100 samples, got {calibration_samples}"),
        ));
    }

    let default_output = OutputPaths::default();
    let output = OutputPaths {
        csv: raw.output.csv.unwrap_or(default_output.csv),
        constants: raw.output.constants.unwrap_or(default_output.constants),
        snapshot_u: raw.output.snapshot_u.unwrap_or(default_output.snapshot_u),
        snapshot_v: raw.output.snapshot_v.unwrap_or(default_output.snapshot_v),
    };

    let scenario = ScenarioConfig {
        grid,
        chi: params.chi(),
        gamma: params.gamma(),
        beta: params.beta(),
        v_floor: params.v_floor(),
        initial_u: raw.initial.u,
        initial_v: raw.initial.v,
        formulation,
        horizon: raw.run.horizon,
        sample_interval,
        monitor_r,
        monitor_cap: raw.run.monitor_cap,
        seed: raw.run.seed.unwrap_or(0),
        control,
        c_gn: raw.audit.c_gn,
        c_s: raw.audit.c_s,
        calibration_samples,
        output,
    };

    match raw.sweep {
        None => Ok(ParsedConfig::Scenario(scenario)),
        Some(sw) => {
            let sweep = SweepConfig {
                base: scenario,
                chi: sw.chi,
                gamma: sw.gamma,
                beta: sw.beta,
                v0_amplitude: sw.v0_amplitude,
                u0_mass: sw.u0_mass,
                max_points: sw.max_points.unwrap_or(1024),
                parallel: sw.parallel.unwrap_or(1).max(1),
                csv: sw.csv.unwrap_or_else(|| "sweep.csv".into()),
            };
            if sweep.n_points() > sweep.max_points {
                return Err(Error::config(
                    "sweep",
                    format!(
                        "cartesian product has {} points, above the limit {}",
                        sweep.n_points(),
                        sweep.max_points
                    ),
                ));
            }
            for (axis, vals) in [
                ("sweep.chi", &sweep.chi),
                ("sweep.gamma", &sweep.gamma),
                ("sweep.beta", &sweep.beta),
                ("sweep.v0_amplitude", &sweep.v0_amplitude),
                ("sweep.u0_mass", &sweep.u0_mass),
            ] {
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config(axis, "axis values must be finite"));
                }
            }
            Ok(ParsedConfig::Sweep(sweep))
        }
    }
}
