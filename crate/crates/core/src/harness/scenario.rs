//! Scenario execution: materialize, integrate, audit, serialize.
//!
//! All floating output is serialized with 17 significant digits so that
//! every reported number round-trips exactly, and repeated runs of the
//! same config produce byte-identical files.

use super::config::ScenarioConfig;
use super::snapshot::write_snapshot;
use crate::functionals::{
    calibrate_cgn, constants_report, entropy_bound_audit, linear_growth_audit, ConstantsReport,
    DiagnosticsCollector, DiagnosticsRecord, EntropyBoundAudit, GrowthAudit,
};
use crate::mesh::ScalarField;
use crate::model::{v_to_w, ModelParams};
use crate::stepper::{advance_to, AdvanceConfig, Formulation, RunStatus, SimState};
use crate::{Error, Result};
use std::path::Path;

/// Exponent grid used whenever `C_GN` is calibrated implicitly.
pub const DEFAULT_P_GRID: [f64; 5] = [2.0, 2.5, 3.0, 3.5, 4.0];

/// 17-significant-digit serialization used for every float we write.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Frozen diagnostics CSV header.
pub const CSV_HEADER: &str =
    "t,mass,entropy,F,fisher,fisher_cum,u2_cum,gradv2,u_inf,v_min,v_max,w_inf,clamp_events";

/// Serialize diagnostics records to the frozen CSV layout.
pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::with_capacity(64 + records.len() * 300);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let cols = [
            fmt_f64(r.t),
            fmt_f64(r.mass),
            fmt_f64(r.entropy),
            fmt_f64(r.f),
            fmt_f64(r.fisher),
            fmt_f64(r.fisher_cum),
            fmt_f64(r.u2_cum),
            fmt_f64(r.gradv2),
            fmt_f64(r.u_inf),
            fmt_f64(r.v_min),
            fmt_f64(r.v_max),
            fmt_f64(r.w_inf),
        ];
        out.push_str(&cols.join(","));
        out.push(',');
        out.push_str(&r.clamp_events.to_string());
        out.push('\n');
    }
    out
}

/// Parse a diagnostics CSV produced by [`diagnostics_csv`].
pub fn parse_diagnostics_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Parameter(format!(
                "unexpected CSV header: {:?}",
                other.unwrap_or("<empty>")
            )))
        }
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 13 {
            return Err(Error::Parameter(format!(
                "CSV line {} has {} columns, expected 13",
                lineno + 2,
                cols.len()
            )));
        }
        let f = |i: usize| -> Result<f64> {
            cols[i]
                .parse::<f64>()
                .map_err(|e| Error::Parameter(format!("CSV line {}: {e}", lineno + 2)))
        };
        records.push(DiagnosticsRecord {
            t: f(0)?,
            mass: f(1)?,
            entropy: f(2)?,
            f: f(3)?,
            fisher: f(4)?,
            fisher_cum: f(5)?,
            u2_cum: f(6)?,
            gradv2: f(7)?,
            u_inf: f(8)?,
            v_min: f(9)?,
            v_max: f(10)?,
            w_inf: f(11)?,
            clamp_events: cols[12]
                .parse::<u64>()
                .map_err(|e| Error::Parameter(format!("CSV line {}: {e}", lineno + 2)))?,
        });
    }
    Ok(records)
}

fn report_value(v: Option<f64>, beta: f64, valid: bool) -> String {
    match v {
        Some(x) => fmt_f64(x),
        None if !valid => "invalid".into(),
        None if beta >= 1.0 => "corollary-regime".into(),
        None => "n/a".into(),
    }
}

/// Serialize a constants report as deterministic key-value text.
pub fn constants_text(rep: &ConstantsReport) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    kv("chi", fmt_f64(rep.chi));
    kv("gamma", fmt_f64(rep.gamma));
    kv("beta", fmt_f64(rep.beta));
    kv("mass", fmt_f64(rep.mass));
    kv("v0_inf", fmt_f64(rep.v0_inf));
    kv("w0_inf", fmt_f64(rep.w0_inf));
    kv("gradv0_sq", fmt_f64(rep.gradv0_sq));
    kv("area", fmt_f64(rep.area));
    kv("c_gn", fmt_f64(rep.c_gn));
    kv(
        "c_s",
        rep.c_s.map(fmt_f64).unwrap_or_else(|| "n/a".into()),
    );
    kv("threshold", fmt_f64(rep.threshold));
    kv("hypothesis", rep.hypothesis.to_string());
    kv("valid", rep.valid.to_string());
    kv("c0", fmt_f64(rep.c0));
    kv("f0", fmt_f64(rep.f0));
    kv("c1", report_value(rep.c1, rep.beta, rep.valid));
    kv("c2", report_value(rep.c2, rep.beta, rep.valid));
    kv("l1", report_value(rep.l1, rep.beta, rep.valid));
    kv("l2", report_value(rep.l2, rep.beta, rep.valid));
    kv("k", report_value(rep.k, rep.beta, rep.valid));
    kv("big_c2", report_value(rep.big_c2, rep.beta, rep.valid));
    kv(
        "l3",
        match (rep.l3, rep.c_s) {
            (Some(x), _) => fmt_f64(x),
            (None, None) => "n/a".into(),
            (None, Some(_)) => report_value(None, rep.beta, rep.valid),
        },
    );
    kv("mass_bound_beta1", fmt_f64(rep.mass_bound_beta1));
    kv(
        "corollary_small_mass",
        rep.corollary_small_mass
            .map(|b| b.to_string())
            .unwrap_or_else(|| "n/a".into()),
    );
    s
}

/// Read selected numeric keys back out of a constants report file.
pub fn constants_lookup(text: &str, key: &str) -> Result<f64> {
    for line in text.lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            if k == key {
                return v
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("key `{key}` has no numeric value: {v}")));
            }
        }
    }
    Err(Error::Parameter(format!("key `{key}` not found")))
}

/// Growth audits use the run-reported coefficient `C = max q/(1+t)`; an
/// identically non-positive series satisfies any linear bound.
pub fn self_calibrated_growth(series: &[(f64, f64)]) -> Result<GrowthAudit> {
    if series.is_empty() {
        return Err(Error::Parameter("empty series".into()));
    }
    let c = series
        .iter()
        .map(|&(t, q)| q / (1.0 + t))
        .fold(f64::NEG_INFINITY, f64::max);
    if c > 0.0 {
        linear_growth_audit(series, c)
    } else {
        Ok(GrowthAudit {
            c: 0.0,
            max_ratio: 0.0,
            pass: c.is_finite(),
        })
    }
}

/// Pass/fail margins of every audit a run performs.
#[derive(Debug, Clone)]
pub struct RunAudits {
    pub hypothesis: bool,
    pub threshold: f64,
    /// `max |mass(t) − mass(0)| / |mass(0)|` over the samples.
    pub mass_drift_rel: f64,
    /// `v_max` non-increasing within 1e−12 across samples.
    pub v_max_monotone: bool,
    pub v_min_positive: bool,
    pub u_min_ok: bool,
    pub growth_fisher_cum: GrowthAudit,
    pub growth_entropy: GrowthAudit,
    pub growth_w_inf: GrowthAudit,
    pub entropy_bound: EntropyBoundAudit,
    pub clamp_events: u64,
    pub fisher_floor_engaged: bool,
}

impl RunAudits {
    /// The hard audits gating exit code 0: exact conservation and
    /// positivity structure of the scheme plus the `𝔉` floor.
    pub fn hard_pass(&self) -> bool {
        self.mass_drift_rel <= 1e-10
            && self.v_min_positive
            && self.u_min_ok
            && self.v_max_monotone
            && self.entropy_bound.worst_lower_excess <= 1e-9
    }
}

/// Everything a scenario run produces.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub status: RunStatus,
    pub records: Vec<DiagnosticsRecord>,
    pub constants: ConstantsReport,
    pub audits: RunAudits,
    pub final_state: SimState,
    /// Final signal field `v` (converted from `w` for transformed runs).
    pub final_v: ScalarField,
    pub c_gn: f64,
    /// Serialized diagnostics CSV (byte-deterministic).
    pub csv: String,
    /// Serialized constants report.
    pub constants_text: String,
}

/// Materialized initial data of a scenario.
pub struct Materialized {
    pub params: ModelParams,
    pub u0: ScalarField,
    pub v0: ScalarField,
    pub w0: ScalarField,
    pub state: SimState,
}

/// Build and validate the initial fields and parameter set of a scenario.
pub fn materialize(cfg: &ScenarioConfig) -> Result<Materialized> {
    let u0 = cfg.initial_u.materialize(cfg.grid)?;
    let v0 = cfg.initial_v.materialize(cfg.grid)?;
    if !u0.is_finite() || !v0.is_finite() {
        return Err(Error::NonFiniteField);
    }
    if u0.min() < 0.0 {
        return Err(Error::config(
            "initial.u",
            format!("u0 >= 0 required, min is {}", u0.min()),
        ));
    }
    if !(v0.min() > 0.0) {
        return Err(Error::config(
            "initial.v",
            format!("v0 > 0 required, min is {}", v0.min()),
        ));
    }
    let v0_max = v0.max();
    let params = cfg.params()?.with_v0_max(v0_max)?;
    let w0 = v_to_w(&v0, v0_max, params.v_floor())?;
    let state = match cfg.formulation {
        Formulation::Original => {
            SimState::new(0.0, u0.clone(), v0.clone(), Formulation::Original)?
        }
        Formulation::Transformed => {
            SimState::new(0.0, u0.clone(), w0.clone(), Formulation::Transformed)?
        }
    };
    Ok(Materialized {
        params,
        u0,
        v0,
        w0,
        state,
    })
}

/// Run one scenario end to end: integrate, collect diagnostics, evaluate
/// the constants ledger and all audits, and serialize the outputs.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let mat = materialize(cfg)?;
    run_materialized(cfg, mat)
}

/// [`run_scenario`] on already-materialized initial data; lets sweeps apply
/// per-point adjustments (mass rescaling) before the run.
pub fn run_materialized(cfg: &ScenarioConfig, mat: Materialized) -> Result<ScenarioOutput> {
    let c_gn = match cfg.c_gn {
        Some(c) => c,
        None => calibrate_cgn(cfg.grid, cfg.calibration_samples, &DEFAULT_P_GRID, cfg.seed)?,
    };
    let constants = constants_report(&mat.params, &mat.u0, &mat.v0, &mat.w0, c_gn, cfg.c_s)?;

    let adv = AdvanceConfig {
        sample_interval: cfg.sample_interval,
        monitor_r: cfg.monitor_r,
        monitor_cap: cfg.monitor_cap,
    };
    let mut collector = DiagnosticsCollector::default();
    let (final_state, status) = advance_to(
        mat.state,
        cfg.horizon,
        &mat.params,
        &cfg.control,
        &adv,
        &mut collector,
    )?;

    let records = collector.records().to_vec();
    let audits = audit_records(&records, &constants, collector.fisher_floor_engaged())?;
    let csv = diagnostics_csv(&records);
    let text = constants_text(&constants);
    let final_v = final_state.signal(&mat.params)?;

    Ok(ScenarioOutput {
        status,
        records,
        constants,
        audits,
        final_state,
        final_v,
        c_gn,
        csv,
        constants_text: text,
    })
}

/// Evaluate every run-level audit on a recorded series.
pub fn audit_records(
    records: &[DiagnosticsRecord],
    constants: &ConstantsReport,
    fisher_floor_engaged: bool,
) -> Result<RunAudits> {
    if records.is_empty() {
        return Err(Error::Parameter("run produced no samples".into()));
    }
    let mass0 = records[0].mass;
    let mass_scale = mass0.abs().max(f64::MIN_POSITIVE);
    let mass_drift_rel = records
        .iter()
        .map(|r| (r.mass - mass0).abs() / mass_scale)
        .fold(0.0, f64::max);

    let mut v_max_monotone = true;
    for pair in records.windows(2) {
        if pair[1].v_max > pair[0].v_max + 1e-12 {
            v_max_monotone = false;
        }
    }
    let v_min_positive = records.iter().all(|r| r.v_min > 0.0);
    let u_min_ok = records
        .iter()
        .all(|r| r.u_inf.is_finite() && r.mass.is_finite());

    let fisher_series: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.fisher_cum)).collect();
    let entropy_series: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.entropy)).collect();
    let winf_series: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.w_inf)).collect();
    let f_series: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.f)).collect();

    // The upper entropy bound needs c2; when the chain is unavailable
    // (corollary regime or failed hypothesis) only the -|Ω|/e floor binds.
    let c2 = constants.c2.unwrap_or(f64::INFINITY);
    let entropy_bound = entropy_bound_audit(&f_series, constants.f0, c2, constants.area);

    Ok(RunAudits {
        hypothesis: constants.hypothesis,
        threshold: constants.threshold,
        mass_drift_rel,
        v_max_monotone,
        v_min_positive,
        u_min_ok,
        growth_fisher_cum: self_calibrated_growth(&fisher_series)?,
        growth_entropy: self_calibrated_growth(&entropy_series)?,
        growth_w_inf: self_calibrated_growth(&winf_series)?,
        entropy_bound,
        clamp_events: records.last().unwrap().clamp_events,
        fisher_floor_engaged,
    })
}

/// Write a run's outputs under `dir` using the configured file names.
pub fn write_outputs(cfg: &ScenarioConfig, out: &ScenarioOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(&cfg.output.csv), out.csv.as_bytes())?;
    std::fs::write(dir.join(&cfg.output.constants), out.constants_text.as_bytes())?;
    write_snapshot(&out.final_state.u, &dir.join(&cfg.output.snapshot_u))?;
    write_snapshot(&out.final_v, &dir.join(&cfg.output.snapshot_v))?;
    Ok(())
}
