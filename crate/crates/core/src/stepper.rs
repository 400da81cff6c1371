//! Explicit time integration with stability-limited adaptive steps,
//! positivity guarding, and the blow-up monitor.
//!
//! The default integrator is Heun's method (explicit trapezoidal): a step is
//! computed, checked against positivity/finiteness requirements, and *rejected
//! and retried at half the step size* rather than clipped — clipping would
//! destroy the exact flux-form mass conservation. Forward Euler is kept as a
//! single-stage hook for hand-checked unit tests.
//!
//! The step size combines the diffusive bound `0.25/(1/hx² + 1/hy²)` with an
//! advective bound from the largest chemotactic face velocity, scaled by a
//! safety factor.
//!
//! The monitor realizes the extensibility criterion: if the discrete
//! `‖u‖_∞ + ‖v‖_{W^{1,r}}` ever exceeds a cap (default `1e6 ×` its initial
//! value), the run is flagged `BlowUpSuspected`. The flag means "left the
//! theorem's regime", not "proof of blow-up".

use crate::mesh::{NormKind, ScalarField};
use crate::model::{eval_rhs, w_to_v, ModelParams, RhsKind, RhsStats, Scratch};
use crate::{Error, Result};

/// Which system the state evolves under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// `(u, v)` with singular sensitivity.
    Original,
    /// `(u, w)` after the logarithmic substitution.
    Transformed,
}

/// Complete instantaneous state of a run.
#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub u: ScalarField,
    /// `v` in the original formulation, `w` in the transformed one.
    pub companion: ScalarField,
    pub formulation: Formulation,
    /// Cumulative count of `v_floor` engagements over accepted steps.
    pub clamp_events: u64,
}

impl SimState {
    /// Validated constructor: `t ≥ 0`, `u ≥ −1e−12` pointwise, and the
    /// companion positive (original) or `≥ −1e−12` (transformed).
    pub fn new(
        t: f64,
        u: ScalarField,
        companion: ScalarField,
        formulation: Formulation,
    ) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(Error::Parameter(format!("time must be >= 0, got {t}")));
        }
        if u.grid() != companion.grid() {
            return Err(Error::ShapeMismatch(
                "u and companion field live on different grids".into(),
            ));
        }
        if u.min() < -1e-12 {
            return Err(Error::Admissibility(format!(
                "u must be >= -1e-12 pointwise, min is {}",
                u.min()
            )));
        }
        match formulation {
            Formulation::Original => {
                if !(companion.min() > 0.0) {
                    return Err(Error::Admissibility(format!(
                        "v must be positive pointwise, min is {}",
                        companion.min()
                    )));
                }
            }
            Formulation::Transformed => {
                if companion.min() < -1e-12 {
                    return Err(Error::Admissibility(format!(
                        "w must be >= -1e-12 pointwise, min is {}",
                        companion.min()
                    )));
                }
            }
        }
        Ok(Self {
            t,
            u,
            companion,
            formulation,
            clamp_events: 0,
        })
    }

    fn rhs_kind(&self) -> RhsKind {
        match self.formulation {
            Formulation::Original => RhsKind::Original,
            Formulation::Transformed => RhsKind::Transformed,
        }
    }

    /// The signal field `v`, converting from `w` when transformed.
    pub fn signal(&self, params: &ModelParams) -> Result<ScalarField> {
        match self.formulation {
            Formulation::Original => Ok(self.companion.clone()),
            Formulation::Transformed => {
                w_to_v(&self.companion, params.v0_max()?, params.v_floor())
            }
        }
    }
}

/// Adaptive step-size policy.
#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    /// Safety factor in `(0, 1]`.
    pub sigma: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Maximum number of halvings after a rejected step.
    pub retry_limit: u32,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            sigma: 0.4,
            dt_min: 1e-13,
            dt_max: 1e9,
            retry_limit: 8,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(Error::Parameter(format!(
                "sigma must lie in (0,1], got {}",
                self.sigma
            )));
        }
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_max) {
            return Err(Error::Parameter(format!(
                "need 0 < dt_min < dt_max, got {} and {}",
                self.dt_min, self.dt_max
            )));
        }
        Ok(())
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Completed,
    BlowUpSuspected,
    DtUnderflow,
}

impl std::fmt::Display for RunKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RunKind::Completed => "Completed",
            RunKind::BlowUpSuspected => "BlowUpSuspected",
            RunKind::DtUnderflow => "DtUnderflow",
        };
        f.write_str(s)
    }
}

/// Final run status: kind, stop time and a human-readable detail line.
#[derive(Debug, Clone)]
pub struct RunStatus {
    pub kind: RunKind,
    pub t_stop: f64,
    pub detail: String,
}

/// Largest chemotactic face speed of the current state.
fn max_face_velocity(state: &SimState, params: &ModelParams) -> Result<f64> {
    // The drift velocity only involves the companion field, so evaluate the
    // full right-hand side into throwaway buffers sized like the state.
    let grid = *state.u.grid();
    let n = grid.n_cells();
    let mut du = vec![0.0; n];
    let mut dc = vec![0.0; n];
    let mut scratch = Scratch::default();
    let stats = eval_rhs(
        state.rhs_kind(),
        &grid,
        state.u.values(),
        state.companion.values(),
        params,
        &mut du,
        &mut dc,
        &mut scratch,
    )?;
    Ok(stats.max_velocity)
}

fn dt_diffusive(state: &SimState) -> f64 {
    let g = state.u.grid();
    0.25 / (1.0 / (g.hx() * g.hx()) + 1.0 / (g.hy() * g.hy()))
}

fn dt_from_parts(dt_diff: f64, max_velocity: f64, state: &SimState, control: &StepControl) -> f64 {
    let g = state.u.grid();
    let dt_adv = g.hx().min(g.hy()) / (1e-30 + max_velocity);
    control.sigma * dt_diff.min(dt_adv).min(control.dt_max)
}

/// Stability-limited step size `σ · min(dt_diff, dt_adv, dt_max)`.
pub fn stable_dt(state: &SimState, params: &ModelParams, control: &StepControl) -> Result<f64> {
    control.validate()?;
    let vel = max_face_velocity(state, params)?;
    Ok(dt_from_parts(dt_diffusive(state), vel, state, control))
}

/// Result of one adaptive step attempt.
#[derive(Debug, Clone)]
pub enum StepOutcome {
    Accepted { state: SimState, dt_used: f64 },
    /// Every retry down to the limit was rejected.
    DtUnderflow { last_dt: f64 },
}

struct Workspace {
    k1_du: Vec<f64>,
    k1_dc: Vec<f64>,
    k2_du: Vec<f64>,
    k2_dc: Vec<f64>,
    pred_u: Vec<f64>,
    pred_c: Vec<f64>,
    cand_u: Vec<f64>,
    cand_c: Vec<f64>,
    scratch: Scratch,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k1_du: vec![0.0; n],
            k1_dc: vec![0.0; n],
            k2_du: vec![0.0; n],
            k2_dc: vec![0.0; n],
            pred_u: vec![0.0; n],
            pred_c: vec![0.0; n],
            cand_u: vec![0.0; n],
            cand_c: vec![0.0; n],
            scratch: Scratch::default(),
        }
    }
}

struct CandidateScan {
    finite: bool,
    u_min: f64,
    u_max_abs: f64,
    c_min: f64,
    c_max_abs: f64,
}

/// Heun update of the candidate buffers plus an acceptance scan.
fn build_candidate(state: &SimState, dt: f64, ws: &mut Workspace) -> CandidateScan {
    let u = state.u.values();
    let c = state.companion.values();
    let half = 0.5 * dt;
    let mut scan = CandidateScan {
        finite: true,
        u_min: f64::INFINITY,
        u_max_abs: 0.0,
        c_min: f64::INFINITY,
        c_max_abs: 0.0,
    };
    for k in 0..u.len() {
        let nu = u[k] + half * (ws.k1_du[k] + ws.k2_du[k]);
        let nc = c[k] + half * (ws.k1_dc[k] + ws.k2_dc[k]);
        ws.cand_u[k] = nu;
        ws.cand_c[k] = nc;
        scan.finite &= nu.is_finite() & nc.is_finite();
        scan.u_min = scan.u_min.min(nu);
        scan.u_max_abs = scan.u_max_abs.max(nu.abs());
        scan.c_min = scan.c_min.min(nc);
        scan.c_max_abs = scan.c_max_abs.max(nc.abs());
    }
    scan
}

fn candidate_acceptable(formulation: Formulation, scan: &CandidateScan) -> bool {
    if !scan.finite {
        return false;
    }
    if scan.u_min < -1e-10 * scan.u_max_abs {
        return false;
    }
    match formulation {
        Formulation::Original => scan.c_min > 0.0,
        Formulation::Transformed => scan.c_min >= -1e-10 * (1.0 + scan.c_max_abs),
    }
}

/// One adaptive Heun step: evaluates both stages, rejects candidates that go
/// negative (beyond round-off slack) or lose positivity of `v`, and retries
/// with `dt/2` up to the retry limit.
pub fn step(
    state: &SimState,
    dt: f64,
    params: &ModelParams,
    control: &StepControl,
) -> Result<StepOutcome> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    let mut ws = Workspace::new(state.u.grid().n_cells());
    let mut out = state.clone();
    match step_with_workspace(&mut out, dt, params, control, &mut ws)? {
        Some(dt_used) => Ok(StepOutcome::Accepted {
            state: out,
            dt_used,
        }),
        None => Ok(StepOutcome::DtUnderflow { last_dt: dt }),
    }
}

/// Core of [`step`]; mutates `state` in place on acceptance and returns the
/// step size actually used, or `None` on underflow.
fn step_with_workspace(
    state: &mut SimState,
    dt: f64,
    params: &ModelParams,
    control: &StepControl,
    ws: &mut Workspace,
) -> Result<Option<f64>> {
    let grid = *state.u.grid();
    // Stage 1 is valid for every retry: it only depends on the state.
    let stats1 = eval_rhs(
        state.rhs_kind(),
        &grid,
        state.u.values(),
        state.companion.values(),
        params,
        &mut ws.k1_du,
        &mut ws.k1_dc,
        &mut ws.scratch,
    )?;
    step_inner(state, dt, params, control, ws, &stats1)
}

/// Single forward-Euler stage without rejection; unit-test hook only.
pub fn step_euler(state: &SimState, dt: f64, params: &ModelParams) -> Result<SimState> {
    let grid = *state.u.grid();
    let n = grid.n_cells();
    let mut du = vec![0.0; n];
    let mut dc = vec![0.0; n];
    let mut scratch = Scratch::default();
    let stats = eval_rhs(
        state.rhs_kind(),
        &grid,
        state.u.values(),
        state.companion.values(),
        params,
        &mut du,
        &mut dc,
        &mut scratch,
    )?;
    let mut out = state.clone();
    for k in 0..n {
        out.u.values_mut()[k] += dt * du[k];
        out.companion.values_mut()[k] += dt * dc[k];
    }
    out.t += dt;
    out.clamp_events += stats.clamp_events;
    Ok(out)
}

/// Monitor outcome of [`blow_up_monitor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorOutcome {
    Ok,
    BlowUpSuspected,
}

/// Discrete `‖u‖_∞ + ‖v‖_{W^{1,r}}` of a state.
pub fn monitored_sum(state: &SimState, params: &ModelParams, r: f64) -> Result<f64> {
    let v = state.signal(params)?;
    Ok(state.u.norm(NormKind::Linf)? + v.norm(NormKind::W1r(r))?)
}

/// Extensibility-criterion monitor: flags when the tracked sum exceeds `cap`
/// or any field entry is non-finite.
pub fn blow_up_monitor(
    state: &SimState,
    params: &ModelParams,
    r: f64,
    cap: f64,
) -> Result<MonitorOutcome> {
    if !(cap > 0.0) {
        return Err(Error::Parameter(format!("cap must be positive, got {cap}")));
    }
    if !state.u.is_finite() || !state.companion.is_finite() {
        return Ok(MonitorOutcome::BlowUpSuspected);
    }
    let sum = monitored_sum(state, params, r)?;
    if !sum.is_finite() || sum > cap {
        Ok(MonitorOutcome::BlowUpSuspected)
    } else {
        Ok(MonitorOutcome::Ok)
    }
}

/// Sampling + monitor policy of the time loop.
#[derive(Debug, Clone, Copy)]
pub struct AdvanceConfig {
    /// Fixed recording interval; the loop lands on sample times exactly.
    pub sample_interval: f64,
    /// Exponent `r > 2` of the monitored `W^{1,r}` norm.
    pub monitor_r: f64,
    /// Blow-up cap; `None` means `1e6 ×` the initial monitored sum.
    pub monitor_cap: Option<f64>,
}

/// Observer invoked at every sample time (including `t = t₀` and the final
/// time reached).
pub trait Recorder {
    fn sample(&mut self, state: &SimState, params: &ModelParams) -> Result<()>;
}

/// Recorder that drops every sample.
pub struct NullRecorder;

impl Recorder for NullRecorder {
    fn sample(&mut self, _state: &SimState, _params: &ModelParams) -> Result<()> {
        Ok(())
    }
}

/// Advance `state` to `horizon` with adaptive steps, sampling the recorder at
/// a fixed interval and running the blow-up monitor at each sample.
pub fn advance_to(
    mut state: SimState,
    horizon: f64,
    params: &ModelParams,
    control: &StepControl,
    adv: &AdvanceConfig,
    recorder: &mut dyn Recorder,
) -> Result<(SimState, RunStatus)> {
    control.validate()?;
    if !(horizon >= state.t) {
        return Err(Error::Parameter(format!(
            "horizon {horizon} lies before current time {}",
            state.t
        )));
    }
    if !(adv.sample_interval > 0.0) {
        return Err(Error::Parameter(format!(
            "sample_interval must be positive, got {}",
            adv.sample_interval
        )));
    }

    let t0 = state.t;
    let cap = match adv.monitor_cap {
        Some(c) => c,
        None => 1e6 * monitored_sum(&state, params, adv.monitor_r)?.max(f64::MIN_POSITIVE),
    };

    recorder.sample(&state, params)?;
    if blow_up_monitor(&state, params, adv.monitor_r, cap)? == MonitorOutcome::BlowUpSuspected {
        let detail = format!("monitored sum exceeded cap {cap:.3e} at t = {}", state.t);
        let status = RunStatus {
            kind: RunKind::BlowUpSuspected,
            t_stop: state.t,
            detail,
        };
        return Ok((state, status));
    }
    if horizon == state.t {
        let status = RunStatus {
            kind: RunKind::Completed,
            t_stop: state.t,
            detail: "horizon equals start time".into(),
        };
        return Ok((state, status));
    }

    let dt_diff = dt_diffusive(&state);
    let mut ws = Workspace::new(state.u.grid().n_cells());
    let mut next_sample: u64 = 1;
    let sample_time = |k: u64| t0 + k as f64 * adv.sample_interval;
    let mut steps: u64 = 0;

    loop {
        let target = sample_time(next_sample).min(horizon);

        // Stage 1 doubles as the velocity scan for the advective CFL bound.
        let grid = *state.u.grid();
        let stats1: RhsStats = eval_rhs(
            state.rhs_kind(),
            &grid,
            state.u.values(),
            state.companion.values(),
            params,
            &mut ws.k1_du,
            &mut ws.k1_dc,
            &mut ws.scratch,
        )?;
        let dt_stable = dt_from_parts(dt_diff, stats1.max_velocity, &state, control);
        if dt_stable < control.dt_min {
            let status = RunStatus {
                kind: RunKind::DtUnderflow,
                t_stop: state.t,
                detail: format!("stable dt {dt_stable:.3e} fell below dt_min"),
            };
            return Ok((state, status));
        }
        let remaining = target - state.t;
        let clipped = dt_stable >= remaining;
        let dt = if clipped { remaining } else { dt_stable };

        let accepted = step_inner(&mut state, dt, params, control, &mut ws, &stats1)?;
        let Some(_dt_used) = accepted else {
            let status = RunStatus {
                kind: RunKind::DtUnderflow,
                t_stop: state.t,
                detail: format!("step rejected {} times at t = {}", control.retry_limit, state.t),
            };
            return Ok((state, status));
        };
        steps += 1;
        if clipped && accepted == Some(dt) {
            // Land exactly on the sample/horizon time.
            state.t = target;
        }

        if state.t >= target {
            recorder.sample(&state, params)?;
            if blow_up_monitor(&state, params, adv.monitor_r, cap)?
                == MonitorOutcome::BlowUpSuspected
            {
                let detail =
                    format!("monitored sum exceeded cap {cap:.3e} at t = {}", state.t);
                let status = RunStatus {
                    kind: RunKind::BlowUpSuspected,
                    t_stop: state.t,
                    detail,
                };
                return Ok((state, status));
            }
            if state.t >= horizon {
                let status = RunStatus {
                    kind: RunKind::Completed,
                    t_stop: state.t,
                    detail: format!("{steps} accepted steps"),
                };
                return Ok((state, status));
            }
            while sample_time(next_sample) <= state.t {
                next_sample += 1;
            }
        }
    }
}

/// Heun attempt loop sharing a precomputed stage 1.
fn step_inner(
    state: &mut SimState,
    dt: f64,
    params: &ModelParams,
    control: &StepControl,
    ws: &mut Workspace,
    stats1: &RhsStats,
) -> Result<Option<f64>> {
    let grid = *state.u.grid();
    let kind = state.rhs_kind();
    let mut dt_try = dt;
    for _attempt in 0..=control.retry_limit {
        let u = state.u.values();
        let c = state.companion.values();
        for k in 0..u.len() {
            ws.pred_u[k] = u[k] + dt_try * ws.k1_du[k];
            ws.pred_c[k] = c[k] + dt_try * ws.k1_dc[k];
        }
        let stats2 = eval_rhs(
            kind,
            &grid,
            &ws.pred_u,
            &ws.pred_c,
            params,
            &mut ws.k2_du,
            &mut ws.k2_dc,
            &mut ws.scratch,
        )?;
        let scan = build_candidate(state, dt_try, ws);
        if candidate_acceptable(state.formulation, &scan) {
            state.u.values_mut().copy_from_slice(&ws.cand_u);
            state.companion.values_mut().copy_from_slice(&ws.cand_c);
            state.t += dt_try;
            state.clamp_events += stats1.clamp_events + stats2.clamp_events;
            return Ok(Some(dt_try));
        }
        dt_try *= 0.5;
        if dt_try < control.dt_min {
            return Ok(None);
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;
    use approx::assert_relative_eq;

    fn params(chi: f64, gamma: f64, beta: f64) -> ModelParams {
        ModelParams::new(chi, gamma, beta).unwrap()
    }

    fn constant_state(n: usize, u: f64, v: f64) -> SimState {
        let g = Grid::unit_square(n).unwrap();
        SimState::new(
            0.0,
            ScalarField::constant(g, u),
            ScalarField::constant(g, v),
            Formulation::Original,
        )
        .unwrap()
    }

    #[test]
    fn state_constructor_validates() {
        let g = Grid::unit_square(4).unwrap();
        let u = ScalarField::constant(g, 1.0);
        let v = ScalarField::zeros(g);
        assert!(SimState::new(0.0, u.clone(), v, Formulation::Original).is_err());
        let mut neg = ScalarField::constant(g, 1.0);
        neg.set(0, 0, -1.0);
        let vpos = ScalarField::constant(g, 1.0);
        assert!(SimState::new(0.0, neg, vpos.clone(), Formulation::Original).is_err());
        assert!(SimState::new(-1.0, u, vpos, Formulation::Original).is_err());
    }

    #[test]
    fn stable_dt_pure_diffusion_hand_value() {
        // chi = 0 switches the drift off entirely; hx = hy = 0.1 and
        // sigma = 0.4 give dt = 0.4 * 0.25 / 200 = 5e-4.
        let g = Grid::new(10, 10, 1.0, 1.0).unwrap();
        let state = SimState::new(
            0.0,
            ScalarField::constant(g, 1.0),
            ScalarField::from_fn(g, |x, y| 0.5 + 0.1 * x + 0.2 * y),
            Formulation::Original,
        )
        .unwrap();
        let p = ModelParams::new(0.0, 0.5, 0.5).unwrap();
        let dt = stable_dt(&state, &p, &StepControl::default()).unwrap();
        assert_relative_eq!(dt, 5e-4, max_relative = 1e-12);
    }

    #[test]
    fn stable_dt_zero_velocity_is_diffusion_limited() {
        // Constant v -> zero drift even with large chi.
        let state = constant_state(10, 1.0, 0.3);
        let p = params(50.0, 0.5, 0.5);
        let dt = stable_dt(&state, &p, &StepControl::default()).unwrap();
        assert_relative_eq!(dt, 5e-4, max_relative = 1e-12);
    }

    #[test]
    fn stable_dt_quarters_under_refinement() {
        let coarse = constant_state(10, 1.0, 0.3);
        let fine = constant_state(20, 1.0, 0.3);
        let p = params(1.0, 0.5, 0.5);
        let ctl = StepControl::default();
        let dt_c = stable_dt(&coarse, &p, &ctl).unwrap();
        let dt_f = stable_dt(&fine, &p, &ctl).unwrap();
        assert_relative_eq!(dt_c / dt_f, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn euler_step_hand_check() {
        // u ≡ 1, v ≡ 1, beta = 0.5, dt = 0.1: dv = -1 so v -> 0.9, u fixed.
        let state = constant_state(8, 1.0, 1.0);
        let p = params(7.0, 0.5, 0.5);
        let next = step_euler(&state, 0.1, &p).unwrap();
        for &u in next.u.values() {
            assert_relative_eq!(u, 1.0, max_relative = 1e-13);
        }
        for &v in next.companion.values() {
            assert_relative_eq!(v, 0.9, max_relative = 1e-13);
        }
        assert_relative_eq!(next.t, 0.1);
    }

    #[test]
    fn zero_u_is_absorbing() {
        let g = Grid::unit_square(8).unwrap();
        let state = SimState::new(
            0.0,
            ScalarField::zeros(g),
            ScalarField::from_fn(g, |x, _| 0.3 + 0.1 * x),
            Formulation::Original,
        )
        .unwrap();
        let p = params(2.0, 0.5, 0.5);
        match step(&state, 1e-4, &p, &StepControl::default()).unwrap() {
            StepOutcome::Accepted { state, .. } => {
                assert!(state.u.max_abs() == 0.0);
            }
            StepOutcome::DtUnderflow { .. } => panic!("step should be accepted"),
        }
    }

    #[test]
    fn heun_step_conserves_mass() {
        let g = Grid::unit_square(16).unwrap();
        let u = ScalarField::from_fn(g, |x, y| {
            1.0 + (-((x - 0.4).powi(2) + (y - 0.6).powi(2)) / 0.02).exp()
        });
        let v = ScalarField::from_fn(g, |x, y| 0.2 + 0.05 * (x + y));
        let state = SimState::new(0.0, u, v, Formulation::Original).unwrap();
        let p = params(2.0, 0.5, 0.5);
        let ctl = StepControl::default();
        let dt = stable_dt(&state, &p, &ctl).unwrap();
        let mass0 = state.u.integrate().unwrap();
        match step(&state, dt, &p, &ctl).unwrap() {
            StepOutcome::Accepted { state, .. } => {
                let mass1 = state.u.integrate().unwrap();
                assert!((mass1 - mass0).abs() <= 1e-12 * mass0.abs());
            }
            StepOutcome::DtUnderflow { .. } => panic!("step should be accepted"),
        }
    }

    #[test]
    fn signal_max_is_non_increasing() {
        let g = Grid::unit_square(12).unwrap();
        let u = ScalarField::from_fn(g, |x, y| {
            (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) / 0.01).exp()
        });
        let v = ScalarField::from_fn(g, |x, _| 0.15 + 0.05 * (3.0 * x).cos());
        let mut state = SimState::new(0.0, u, v, Formulation::Original).unwrap();
        let p = params(2.0, 0.5, 0.5);
        let ctl = StepControl::default();
        let mut vmax = state.companion.max();
        for _ in 0..50 {
            let dt = stable_dt(&state, &p, &ctl).unwrap();
            match step(&state, dt, &p, &ctl).unwrap() {
                StepOutcome::Accepted { state: s, .. } => state = s,
                StepOutcome::DtUnderflow { .. } => panic!("unexpected underflow"),
            }
            let cur = state.companion.max();
            assert!(cur <= vmax + 1e-12, "max principle violated: {cur} > {vmax}");
            assert!(state.companion.min() > 0.0);
            assert!(state.u.min() >= -1e-10 * state.u.max_abs());
            vmax = cur;
        }
    }

    #[test]
    fn monitor_constant_state_and_thresholds() {
        let state = constant_state(8, 1.0, 1.0);
        let p = params(1.0, 0.5, 0.5);
        // ‖u‖∞ + ‖v‖_{W^{1,3}} = 1 + 1 = 2 on the unit square.
        let sum = monitored_sum(&state, &p, 3.0).unwrap();
        assert_relative_eq!(sum, 2.0, max_relative = 1e-12);
        assert_eq!(
            blow_up_monitor(&state, &p, 3.0, 100.0).unwrap(),
            MonitorOutcome::Ok
        );
        assert_eq!(
            blow_up_monitor(&state, &p, 3.0, 1.0).unwrap(),
            MonitorOutcome::BlowUpSuspected
        );
        assert!(blow_up_monitor(&state, &p, 3.0, 0.0).is_err());
    }

    #[test]
    fn monitor_flags_non_finite() {
        let mut state = constant_state(8, 1.0, 1.0);
        state.u.set(2, 2, f64::NAN);
        let p = params(1.0, 0.5, 0.5);
        assert_eq!(
            blow_up_monitor(&state, &p, 3.0, 1e30).unwrap(),
            MonitorOutcome::BlowUpSuspected
        );
    }

    #[test]
    fn advance_returns_immediately_at_horizon() {
        let state = constant_state(8, 1.0, 0.5);
        let p = params(1.0, 0.5, 0.5);
        let adv = AdvanceConfig {
            sample_interval: 0.1,
            monitor_r: 3.0,
            monitor_cap: None,
        };
        let (out, status) = advance_to(
            state,
            0.0,
            &p,
            &StepControl::default(),
            &adv,
            &mut NullRecorder,
        )
        .unwrap();
        assert_eq!(status.kind, RunKind::Completed);
        assert_eq!(out.t, 0.0);
    }

    #[test]
    fn advance_underflows_with_hostile_control() {
        let state = constant_state(8, 1.0, 0.5);
        let p = params(1.0, 0.5, 0.5);
        let ctl = StepControl {
            dt_min: 1.0,
            dt_max: 2.0,
            ..StepControl::default()
        };
        let adv = AdvanceConfig {
            sample_interval: 0.5,
            monitor_r: 3.0,
            monitor_cap: None,
        };
        let (_, status) =
            advance_to(state, 1.0, &p, &ctl, &adv, &mut NullRecorder).unwrap();
        assert_eq!(status.kind, RunKind::DtUnderflow);
    }

    #[test]
    fn advance_hypothesis_scenario_completes_clean() {
        // chi = 2, gamma = 0.5, ‖v0‖∞ = 0.2 < 2^{1/(0.5-1)} = 0.25.
        let g = Grid::unit_square(16).unwrap();
        let u = ScalarField::from_fn(g, |x, y| {
            (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) / 0.03).exp()
        });
        let v = ScalarField::constant(g, 0.2);
        let state = SimState::new(0.0, u, v, Formulation::Original).unwrap();
        let p = params(2.0, 0.5, 0.5).with_v0_max(0.2).unwrap();
        let adv = AdvanceConfig {
            sample_interval: 0.05,
            monitor_r: 3.0,
            monitor_cap: None,
        };
        let (out, status) = advance_to(
            state,
            0.3,
            &p,
            &StepControl::default(),
            &adv,
            &mut NullRecorder,
        )
        .unwrap();
        assert_eq!(status.kind, RunKind::Completed);
        assert_eq!(out.clamp_events, 0);
        assert_relative_eq!(out.t, 0.3, max_relative = 1e-12);
    }

    #[test]
    fn transformed_run_keeps_w_nonnegative() {
        let g = Grid::unit_square(12).unwrap();
        let u = ScalarField::from_fn(g, |x, y| {
            (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) / 0.02).exp()
        });
        let w = ScalarField::zeros(g);
        let state = SimState::new(0.0, u, w, Formulation::Transformed).unwrap();
        let p = params(2.0, 0.5, 0.5).with_v0_max(0.2).unwrap();
        let adv = AdvanceConfig {
            sample_interval: 0.05,
            monitor_r: 3.0,
            monitor_cap: None,
        };
        let (out, status) = advance_to(
            state,
            0.2,
            &p,
            &StepControl::default(),
            &adv,
            &mut NullRecorder,
        )
        .unwrap();
        assert_eq!(status.kind, RunKind::Completed);
        assert!(out.companion.min() >= -1e-10 * (1.0 + out.companion.max_abs()));
    }
}
