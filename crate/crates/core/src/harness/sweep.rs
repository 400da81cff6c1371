//! Parameter sweeps over the hypothesis/corollary decision surfaces.
//!
//! Rows are fully independent: each point rebuilds its scenario from the
//! base config plus its own axis values, so any subset rerun in isolation
//! reproduces its rows byte-identically. Individual point failures are
//! recorded in the row's `error` column and the sweep continues.

use super::config::{ScenarioConfig, SweepConfig};
use super::generators::rescale_to_mass;
use super::scenario::{self, fmt_f64, DEFAULT_P_GRID};
use crate::functionals::calibrate_cgn;
use crate::stepper::{RunKind, SimState};
use crate::Result;
use rayon::prelude::*;

/// One grid point of a sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    pub chi: Option<f64>,
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub v0_amplitude: Option<f64>,
    pub u0_mass: Option<f64>,
}

/// One result row of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: SweepPoint,
    /// Effective parameters after applying the axes.
    pub chi: f64,
    pub gamma: f64,
    pub beta: f64,
    pub hypothesis: Option<bool>,
    pub threshold: Option<f64>,
    /// Small-mass corollary verdict; only present on `β = 1` points.
    pub corollary: Option<bool>,
    pub status: Option<RunKind>,
    pub t_stop: Option<f64>,
    pub mass_drift_rel: Option<f64>,
    pub finals: Option<RowFinals>,
    pub c_fisher_cum: Option<f64>,
    pub c_entropy: Option<f64>,
    pub c_w_inf: Option<f64>,
    pub entropy_upper_excess: Option<f64>,
    pub entropy_lower_excess: Option<f64>,
    pub clamp_events: Option<u64>,
    pub error: Option<String>,
}

/// Final tracked quantities of a completed point.
#[derive(Debug, Clone, Copy)]
pub struct RowFinals {
    pub mass: f64,
    pub entropy: f64,
    pub f: f64,
    pub fisher_cum: f64,
    pub u2_cum: f64,
    pub gradv2: f64,
    pub u_inf: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub w_inf: f64,
}

/// Sweep results plus their CSV serialization.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub csv: String,
}

pub const SWEEP_CSV_HEADER: &str = "index,chi,gamma,beta,v0_amplitude,u0_mass,hypothesis,\
threshold,corollary,status,t_stop,mass_drift_rel,mass_final,entropy_final,F_final,\
fisher_cum_final,u2_cum_final,gradv2_final,u_inf_final,v_min_final,v_max_final,w_inf_final,\
clamp_events,c_fisher_cum,c_entropy,c_w_inf,entropy_upper_excess,entropy_lower_excess,error";

fn axis_choices(vals: &[f64]) -> Vec<Option<f64>> {
    if vals.is_empty() {
        vec![None]
    } else {
        vals.iter().copied().map(Some).collect()
    }
}

/// Enumerate the cartesian product in a fixed, documented order.
pub fn sweep_points(cfg: &SweepConfig) -> Vec<SweepPoint> {
    let mut points = Vec::with_capacity(cfg.n_points());
    let mut index = 0;
    for chi in axis_choices(&cfg.chi) {
        for gamma in axis_choices(&cfg.gamma) {
            for beta in axis_choices(&cfg.beta) {
                for v0a in axis_choices(&cfg.v0_amplitude) {
                    for u0m in axis_choices(&cfg.u0_mass) {
                        points.push(SweepPoint {
                            index,
                            chi,
                            gamma,
                            beta,
                            v0_amplitude: v0a,
                            u0_mass: u0m,
                        });
                        index += 1;
                    }
                }
            }
        }
    }
    points
}

/// Build the scenario config for a single sweep point.
fn point_config(base: &ScenarioConfig, point: &SweepPoint, c_gn: f64) -> Result<ScenarioConfig> {
    let mut cfg = base.clone();
    if let Some(chi) = point.chi {
        cfg.chi = chi;
    }
    if let Some(gamma) = point.gamma {
        cfg.gamma = gamma;
    }
    if let Some(beta) = point.beta {
        cfg.beta = beta;
    }
    if let Some(a) = point.v0_amplitude {
        cfg.initial_v = cfg.initial_v.with_amplitude(a)?;
    }
    cfg.c_gn = Some(c_gn);
    Ok(cfg)
}

fn run_point(base: &ScenarioConfig, point: &SweepPoint, c_gn: f64) -> SweepRow {
    let mut row = SweepRow {
        point: point.clone(),
        chi: point.chi.unwrap_or(base.chi),
        gamma: point.gamma.unwrap_or(base.gamma),
        beta: point.beta.unwrap_or(base.beta),
        hypothesis: None,
        threshold: None,
        corollary: None,
        status: None,
        t_stop: None,
        mass_drift_rel: None,
        finals: None,
        c_fisher_cum: None,
        c_entropy: None,
        c_w_inf: None,
        entropy_upper_excess: None,
        entropy_lower_excess: None,
        clamp_events: None,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let cfg = point_config(base, point, c_gn)?;
        let mut mat = scenario::materialize(&cfg)?;
        if let Some(target) = point.u0_mass {
            rescale_to_mass(&mut mat.u0, target)?;
            mat.state = SimState::new(
                0.0,
                mat.u0.clone(),
                mat.state.companion.clone(),
                cfg.formulation,
            )?;
        }
        let out = scenario::run_materialized(&cfg, mat)?;
        row.hypothesis = Some(out.constants.hypothesis);
        row.threshold = Some(out.constants.threshold);
        row.corollary = out.constants.corollary_small_mass;
        row.status = Some(out.status.kind);
        row.t_stop = Some(out.status.t_stop);
        row.mass_drift_rel = Some(out.audits.mass_drift_rel);
        let last = out.records.last().expect("run produces samples");
        row.finals = Some(RowFinals {
            mass: last.mass,
            entropy: last.entropy,
            f: last.f,
            fisher_cum: last.fisher_cum,
            u2_cum: last.u2_cum,
            gradv2: last.gradv2,
            u_inf: last.u_inf,
            v_min: last.v_min,
            v_max: last.v_max,
            w_inf: last.w_inf,
        });
        row.c_fisher_cum = Some(out.audits.growth_fisher_cum.c);
        row.c_entropy = Some(out.audits.growth_entropy.c);
        row.c_w_inf = Some(out.audits.growth_w_inf.c);
        row.entropy_upper_excess = Some(out.audits.entropy_bound.worst_upper_excess);
        row.entropy_lower_excess = Some(out.audits.entropy_bound.worst_lower_excess);
        row.clamp_events = Some(out.audits.clamp_events);
        Ok(())
    })();
    if let Err(e) = outcome {
        row.error = Some(e.to_string().replace(',', ";"));
    }
    row
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn row_csv(row: &SweepRow) -> String {
    let finals = row.finals;
    let cols: Vec<String> = vec![
        row.point.index.to_string(),
        fmt_f64(row.chi),
        fmt_f64(row.gamma),
        fmt_f64(row.beta),
        opt(row.point.v0_amplitude),
        opt(row.point.u0_mass),
        row.hypothesis.map(|b| b.to_string()).unwrap_or_default(),
        opt(row.threshold),
        row.corollary
            .map(|b| b.to_string())
            .unwrap_or_else(|| "n/a".into()),
        row.status.map(|s| s.to_string()).unwrap_or_default(),
        opt(row.t_stop),
        opt(row.mass_drift_rel),
        opt(finals.map(|f| f.mass)),
        opt(finals.map(|f| f.entropy)),
        opt(finals.map(|f| f.f)),
        opt(finals.map(|f| f.fisher_cum)),
        opt(finals.map(|f| f.u2_cum)),
        opt(finals.map(|f| f.gradv2)),
        opt(finals.map(|f| f.u_inf)),
        opt(finals.map(|f| f.v_min)),
        opt(finals.map(|f| f.v_max)),
        opt(finals.map(|f| f.w_inf)),
        row.clamp_events.map(|c| c.to_string()).unwrap_or_default(),
        opt(row.c_fisher_cum),
        opt(row.c_entropy),
        opt(row.c_w_inf),
        opt(row.entropy_upper_excess),
        opt(row.entropy_lower_excess),
        row.error.clone().unwrap_or_default(),
    ];
    cols.join(",")
}

/// Serialize sweep rows in index order.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row_csv(row));
        out.push('\n');
    }
    out
}

/// Run every point of the sweep; points are isolated, failures are
/// per-row, and the row order is the enumeration order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutput> {
    // One shared calibration keeps rows subset-reproducible: it depends
    // only on the base config, never on other rows.
    let c_gn = match cfg.base.c_gn {
        Some(c) => c,
        None => calibrate_cgn(
            cfg.base.grid,
            cfg.base.calibration_samples,
            &DEFAULT_P_GRID,
            cfg.base.seed,
        )?,
    };
    let points = sweep_points(cfg);
    let rows: Vec<SweepRow> = if cfg.parallel > 1 {
        points
            .par_iter()
            .map(|p| run_point(&cfg.base, p, c_gn))
            .collect()
    } else {
        points.iter().map(|p| run_point(&cfg.base, p, c_gn)).collect()
    };
    let csv = sweep_csv(&rows);
    Ok(SweepOutput { rows, csv })
}
