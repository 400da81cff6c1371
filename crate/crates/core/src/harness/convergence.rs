//! Grid-refinement studies: manufactured-solution convergence of the pure
//! diffusion path, and the discrepancy between the two formulations.
//!
//! The manufactured solution is the first Neumann eigenmode with a floor,
//! `u(x,y,t) = 1 + cos(πx/lx)cos(πy/ly) e^{−λt}` with
//! `λ = π²(1/lx² + 1/ly²)`, which satisfies the heat equation and the
//! zero-flux boundary exactly, so the measured error is pure
//! discretization error.

use super::config::ScenarioConfig;
use super::scenario::materialize;
use crate::mesh::{Grid, ScalarField};
use crate::model::{ConsumptionLaw, ModelParams};
use crate::stepper::{
    advance_to, AdvanceConfig, Formulation, NullRecorder, RunKind, SimState, StepControl,
};
use crate::{Error, Result};

/// A per-level scalar result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelValue {
    /// Cells per axis.
    pub n: usize,
    pub value: f64,
}

/// Output of [`convergence_study`].
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub mms_horizon: f64,
    pub equivalence_horizon: f64,
    /// L∞ error of the manufactured heat solution per level.
    pub mms_errors: Vec<LevelValue>,
    /// Observed orders between consecutive levels, `log2(e_c/e_f)`.
    pub mms_orders: Vec<f64>,
    /// `‖u_orig − u_transf‖∞` per level.
    pub discrepancies: Vec<LevelValue>,
    /// Reduction factors between consecutive levels.
    pub discrepancy_ratios: Vec<f64>,
}

fn check_levels(levels: &[usize], minimum: usize) -> Result<()> {
    if levels.len() < minimum {
        return Err(Error::Parameter(format!(
            "need at least {minimum} levels, got {}",
            levels.len()
        )));
    }
    for pair in levels.windows(2) {
        if pair[1] != 2 * pair[0] {
            return Err(Error::Parameter(format!(
                "levels must be nested (each double the previous), got {} after {}",
                pair[1], pair[0]
            )));
        }
    }
    Ok(())
}

/// L∞ error of the pure-diffusion manufactured solution on an `n×n` grid of
/// the given rectangle at time `horizon`.
pub fn mms_heat_error(n: usize, lx: f64, ly: f64, horizon: f64, control: &StepControl) -> Result<f64> {
    let pi = std::f64::consts::PI;
    let grid = Grid::new(n, n, lx, ly)?;
    let lambda = pi * pi * (1.0 / (lx * lx) + 1.0 / (ly * ly));
    let mode = move |x: f64, y: f64| (pi * x / lx).cos() * (pi * y / ly).cos();

    let u0 = ScalarField::from_fn(grid, |x, y| 1.0 + mode(x, y));
    let v0 = ScalarField::constant(grid, 1.0);
    let params = ModelParams::new(0.0, 0.5, 0.5)?
        .with_consumption(ConsumptionLaw::Zero)?
        .with_v0_max(1.0)?;
    let state = SimState::new(0.0, u0, v0, Formulation::Original)?;
    let adv = AdvanceConfig {
        sample_interval: horizon,
        monitor_r: 3.0,
        monitor_cap: None,
    };
    let (final_state, status) = advance_to(state, horizon, &params, control, &adv, &mut NullRecorder)?;
    if status.kind != RunKind::Completed {
        return Err(Error::Parameter(format!(
            "manufactured run stopped early: {} at t = {}",
            status.kind, status.t_stop
        )));
    }
    let decay = (-lambda * horizon).exp();
    let mut err = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let (x, y) = grid.cell_center(i, j);
            let exact = 1.0 + mode(x, y) * decay;
            err = err.max((final_state.u.get(i, j) - exact).abs());
        }
    }
    Ok(err)
}

/// Run the base scenario on an `n×n` grid under one formulation and return
/// the final `u`.
fn final_u(base: &ScenarioConfig, n: usize, formulation: Formulation, horizon: f64) -> Result<ScalarField> {
    let mut cfg = base.clone();
    cfg.grid = Grid::new(n, n, base.grid.lx(), base.grid.ly())?;
    cfg.formulation = formulation;
    cfg.horizon = horizon;
    let mat = materialize(&cfg)?;
    let adv = AdvanceConfig {
        sample_interval: horizon,
        monitor_r: cfg.monitor_r,
        monitor_cap: cfg.monitor_cap,
    };
    let (final_state, status) = advance_to(
        mat.state,
        horizon,
        &mat.params,
        &cfg.control,
        &adv,
        &mut NullRecorder,
    )?;
    if status.kind != RunKind::Completed {
        return Err(Error::Parameter(format!(
            "{formulation:?} run at n = {n} stopped early: {} at t = {}",
            status.kind, status.t_stop
        )));
    }
    Ok(final_state.u)
}

/// `‖u_orig − u_transf‖∞` of the base scenario on an `n×n` grid at `horizon`.
pub fn formulation_discrepancy(base: &ScenarioConfig, n: usize, horizon: f64) -> Result<f64> {
    let uo = final_u(base, n, Formulation::Original, horizon)?;
    let ut = final_u(base, n, Formulation::Transformed, horizon)?;
    let mut d = 0.0f64;
    for (a, b) in uo.values().iter().zip(ut.values()) {
        d = d.max((a - b).abs());
    }
    Ok(d)
}

/// Full refinement study over nested levels (at least 3, each doubling).
pub fn convergence_study(
    base: &ScenarioConfig,
    levels: &[usize],
    mms_horizon: f64,
    equivalence_horizon: f64,
) -> Result<ConvergenceReport> {
    check_levels(levels, 3)?;
    if !(mms_horizon > 0.0) || !(equivalence_horizon > 0.0) {
        return Err(Error::Parameter("horizons must be positive".into()));
    }

    let mut mms_errors = Vec::new();
    for &n in levels {
        let err = mms_heat_error(n, base.grid.lx(), base.grid.ly(), mms_horizon, &base.control)?;
        mms_errors.push(LevelValue { n, value: err });
    }
    let mms_orders: Vec<f64> = mms_errors
        .windows(2)
        .map(|w| (w[0].value / w[1].value).log2())
        .collect();

    let mut discrepancies = Vec::new();
    for &n in levels {
        let d = formulation_discrepancy(base, n, equivalence_horizon)?;
        discrepancies.push(LevelValue { n, value: d });
    }
    let discrepancy_ratios: Vec<f64> = discrepancies
        .windows(2)
        .map(|w| w[0].value / w[1].value)
        .collect();

    Ok(ConvergenceReport {
        mms_horizon,
        equivalence_horizon,
        mms_errors,
        mms_orders,
        discrepancies,
        discrepancy_ratios,
    })
}
