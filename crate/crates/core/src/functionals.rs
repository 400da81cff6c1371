//! Paper-level diagnostics, derived constants and inequality auditors.
//!
//! Everything the analysis tracks is computed here: conserved mass, the
//! entropy `∫u log u`, the functional `𝔉 = ∫u log u + ½∫u w` with its
//! `−|Ω|/e` floor, the Fisher-type dissipation `∫|∇u|²/u`, the smallness
//! threshold `χ^{1/(γ−1)}`, the full constants chain
//! `c₀ → c₁ → c₂ → 𝔉(0) → L₁,L₂ → 𝒦 → C₂ → L₃`, and the corollary small-mass
//! bound for `β = 1`.
//!
//! The interpolation constant `C_GN` and the heat-semigroup constant `C_S`
//! have no numeric values in the analysis (they come from the literature),
//! so they are calibrated empirically on seeded random smooth fields with a
//! declared 5% safety factor. Audits therefore report margins against
//! self-consistent constants rather than claims about the analytic optima,
//! and always surface pass/fail together with the measured ratio instead of
//! silently asserting.

use crate::mesh::{Grid, NormKind, ScalarField};
use crate::model::{pow_opt, v_to_w, w_to_v, ModelParams};
use crate::stepper::{
    advance_to, AdvanceConfig, Formulation, NullRecorder, Recorder, RunKind, SimState, StepControl,
};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default denominator floor of the Fisher integrand.
pub const FISHER_FLOOR: f64 = 1e-12;

/// Per-sample values of every tracked functional and cumulative integral.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `∫u`.
    pub mass: f64,
    /// `∫u log u` with `0·log 0 = 0`.
    pub entropy: f64,
    /// `𝔉(u,w) = ∫u log u + ½∫u w`.
    pub f: f64,
    /// `∫|∇u|²/u` at this sample.
    pub fisher: f64,
    /// `∫₀ᵗ∫|∇u|²/u`, trapezoidal in the samples.
    pub fisher_cum: f64,
    /// `∫₀ᵗ∫u²`, trapezoidal in the samples.
    pub u2_cum: f64,
    /// `∫|∇v|²`.
    pub gradv2: f64,
    pub u_inf: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub w_inf: f64,
    pub clamp_events: u64,
}

fn check_u_admissible(u: &ScalarField) -> Result<()> {
    if !u.is_finite() {
        return Err(Error::NonFiniteField);
    }
    let min = u.min();
    if min < -1e-10 * u.max_abs() {
        return Err(Error::Admissibility(format!(
            "u has negative entries beyond tolerance, min = {min}"
        )));
    }
    Ok(())
}

/// Conserved mass `∫u`.
pub fn mass(u: &ScalarField) -> Result<f64> {
    check_u_admissible(u)?;
    u.integrate()
}

/// Entropy `∫u log u`, extended by `0·log 0 = 0` (tolerance-band negatives
/// count as 0).
pub fn entropy(u: &ScalarField) -> Result<f64> {
    check_u_admissible(u)?;
    let s: f64 = u
        .values()
        .iter()
        .map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 })
        .sum();
    Ok(u.grid().cell_area() * s)
}

/// The functional `𝔉(u,w) = ∫u log u + ½∫u w`; bounded below by `−|Ω|/e`
/// whenever `u ≥ 0` and `w ≥ 0`.
pub fn functional_f(u: &ScalarField, w: &ScalarField) -> Result<f64> {
    if u.grid() != w.grid() {
        return Err(Error::ShapeMismatch(
            "u and w live on different grids".into(),
        ));
    }
    if !w.is_finite() {
        return Err(Error::NonFiniteField);
    }
    if w.min() < -1e-10 * (1.0 + w.max_abs()) {
        return Err(Error::Admissibility(format!(
            "w has negative entries beyond tolerance, min = {}",
            w.min()
        )));
    }
    let ent = entropy(u)?;
    let uw: f64 = u
        .values()
        .iter()
        .zip(w.values())
        .map(|(&a, &b)| a * b)
        .sum();
    Ok(ent + 0.5 * u.grid().cell_area() * uw)
}

/// Fisher-type dissipation `∫|∇u|²/max(u, floor)`.
pub fn fisher(u: &ScalarField, floor: f64) -> f64 {
    fisher_flagged(u, floor).0
}

/// [`fisher`] plus a flag telling whether the denominator floor engaged.
pub fn fisher_flagged(u: &ScalarField, floor: f64) -> (f64, bool) {
    let (gx, gy) = u.gradient_centers();
    let mut s = 0.0;
    let mut flagged = false;
    for (k, &val) in u.values().iter().enumerate() {
        let denom = if val < floor {
            flagged = true;
            floor
        } else {
            val
        };
        s += (gx[k] * gx[k] + gy[k] * gy[k]) / denom;
    }
    (u.grid().cell_area() * s, flagged)
}

fn integral_of_square(u: &ScalarField) -> f64 {
    u.grid().cell_area() * u.values().iter().map(|&x| x * x).sum::<f64>()
}

fn integral_of_grad_square(phi: &ScalarField) -> f64 {
    let (gx, gy) = phi.gradient_centers();
    phi.grid().cell_area()
        * gx.iter()
            .zip(&gy)
            .map(|(&a, &b)| a * a + b * b)
            .sum::<f64>()
}

/// Smallness hypothesis `‖v₀‖∞ < χ^{1/(γ−1)}` (strict).
///
/// Returns `(holds, threshold)`.
pub fn hypothesis_check(chi: f64, gamma: f64, v0_max: f64) -> Result<(bool, f64)> {
    if !(chi > 0.0) {
        return Err(Error::Parameter(format!("chi must be positive, got {chi}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Parameter(format!(
            "gamma must lie in (0,1), got {gamma}"
        )));
    }
    if !(v0_max > 0.0) {
        return Err(Error::Parameter(format!(
            "v0_max must be positive, got {v0_max}"
        )));
    }
    let threshold = chi.powf(1.0 / (gamma - 1.0));
    Ok((v0_max < threshold, threshold))
}

/// Derived-constants ledger.
///
/// `c1 … l2` and the bounds built on them exist only for `β < 1`; at `β = 1`
/// the report routes to the corollary small-mass bound instead. `l3` is
/// present only when a heat-semigroup constant was supplied. A report with
/// `valid = false` (failed hypothesis, so `c₀ ≤ 0`) carries no chain values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsReport {
    // Echoed inputs.
    pub chi: f64,
    pub gamma: f64,
    pub beta: f64,
    pub mass: f64,
    pub v0_inf: f64,
    pub w0_inf: f64,
    pub gradv0_sq: f64,
    pub area: f64,
    pub c_gn: f64,
    pub c_s: Option<f64>,
    // Hypothesis.
    pub threshold: f64,
    pub hypothesis: bool,
    pub valid: bool,
    // Chain.
    pub c0: f64,
    pub f0: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    /// `𝒦 = 2m C_GN⁴ (L₁ + 4m)`.
    pub k: Option<f64>,
    /// Coefficient of the `∫|∇v|² ≤ C₂(1+t)` bound.
    pub big_c2: Option<f64>,
    pub l3: Option<f64>,
    /// Corollary mass bound `(1 − χ‖v₀‖∞^{1−γ})/(2 C_GN⁴)`.
    pub mass_bound_beta1: f64,
    /// `m < mass_bound_beta1`, reported only in the `β = 1` regime.
    pub corollary_small_mass: Option<bool>,
}

/// Evaluate the constants chain `c₀ → c₁ → c₂ → 𝔉(0) → L₁,L₂ → 𝒦 → C₂ → L₃`
/// for given initial data and a calibrated `C_GN` (optionally `C_S`).
pub fn constants_report(
    params: &ModelParams,
    u0: &ScalarField,
    v0: &ScalarField,
    w0: &ScalarField,
    c_gn: f64,
    c_s: Option<f64>,
) -> Result<ConstantsReport> {
    if !(c_gn > 0.0) {
        return Err(Error::Parameter(format!(
            "C_GN must be positive, got {c_gn}"
        )));
    }
    if let Some(cs) = c_s {
        if !(cs > 0.0) {
            return Err(Error::Parameter(format!("C_S must be positive, got {cs}")));
        }
    }
    if u0.grid() != v0.grid() || u0.grid() != w0.grid() {
        return Err(Error::ShapeMismatch(
            "initial fields live on different grids".into(),
        ));
    }
    let chi = params.chi();
    let gamma = params.gamma();
    let beta = params.beta();
    let m = mass(u0)?;
    let v0_inf = v0.norm(NormKind::Linf)?;
    let w0_inf = w0.norm(NormKind::Linf)?;
    let gradv0_sq = integral_of_grad_square(v0);
    let area = u0.grid().area();
    let (hypothesis, threshold) = hypothesis_check(chi, gamma, v0_inf)?;

    let c0 = 0.5 - chi * pow_opt(v0_inf, 1.0 - gamma) / 2.0;
    let f0 = functional_f(u0, w0)?;
    let mass_bound_beta1 = (1.0 - chi * pow_opt(v0_inf, 1.0 - gamma)) / (2.0 * c_gn.powi(4));
    let corollary_small_mass = (beta == 1.0).then(|| m < mass_bound_beta1);

    let valid = c0 > 0.0;
    let mut report = ConstantsReport {
        chi,
        gamma,
        beta,
        mass: m,
        v0_inf,
        w0_inf,
        gradv0_sq,
        area,
        c_gn,
        c_s,
        threshold,
        hypothesis,
        valid,
        c0,
        f0,
        c1: None,
        c2: None,
        l1: None,
        l2: None,
        k: None,
        big_c2: None,
        l3: None,
        mass_bound_beta1,
        corollary_small_mass,
    };
    if !valid || beta >= 1.0 {
        // Failed hypothesis has no chain; beta = 1 routes to the corollary.
        return Ok(report);
    }

    let c1 = 2.0
        * (1.0 - beta)
        * c_gn.powf(2.0 * (beta + 1.0) * (beta + 1.0) / (1.0 - beta))
        * (c0 / (2.0 * beta)).powf(beta / (beta - 1.0));
    let c2 = c1 / 2.0 + 4f64.powf(beta) * c_gn.powf(2.0 * (beta + 1.0)) * pow_opt(m, beta + 1.0);
    let l1 = (2.0 / c0) * (f0 + area / std::f64::consts::E).max(c2);
    let l2 = c2.max(f0);
    let k = 2.0 * m * c_gn.powi(4) * (l1 + 4.0 * m);
    let big_c2 = v0_inf * v0_inf * beta * k + gradv0_sq.max(v0_inf * v0_inf * (1.0 - beta) * area);
    let l3 = c_s.map(|cs| {
        cs / (2.0 * (1.0 - beta))
            + cs * k * beta / 2.0
            + 2.0 * cs / (2.0 - beta)
            + w0_inf.max(cs / 2.0 + cs * (1.0 - beta) / 2.0)
    });

    report.c1 = Some(c1);
    report.c2 = Some(c2);
    report.l1 = Some(l1);
    report.l2 = Some(l2);
    report.k = Some(k);
    report.big_c2 = Some(big_c2);
    report.l3 = l3;
    Ok(report)
}

/// Margin report of a `q(t) ≤ C(1+t)` audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthAudit {
    pub c: f64,
    /// `max q(t)/(C(1+t))` over the samples.
    pub max_ratio: f64,
    pub pass: bool,
}

/// Audit a sampled series against the linear-in-time bound `q(t) ≤ C(1+t)`.
pub fn linear_growth_audit(series: &[(f64, f64)], c: f64) -> Result<GrowthAudit> {
    if series.is_empty() {
        return Err(Error::Parameter("empty series".into()));
    }
    if !(c > 0.0) {
        return Err(Error::Parameter(format!("C must be positive, got {c}")));
    }
    let max_ratio = series
        .iter()
        .map(|&(t, q)| q / (c * (1.0 + t)))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(GrowthAudit {
        c,
        max_ratio,
        pass: max_ratio <= 1.0,
    })
}

/// Margin report of the two-sided entropy bound
/// `−|Ω|/e ≤ 𝔉(t) ≤ 𝔉(0) + c₂ t` with a 10% tolerance band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyBoundAudit {
    /// Worst `𝔉(t) − (𝔉(0) + c₂ t)` over samples; negative means margin.
    pub worst_upper_excess: f64,
    /// Worst `−|Ω|/e − 𝔉(t)` over samples; negative means margin.
    pub worst_lower_excess: f64,
    pub pass: bool,
}

/// Audit a sampled `𝔉` series against its integrated dissipation bounds,
/// allowing a band of `10% · (|𝔉(0)| + c₂ t + |Ω|/e)` for discretization
/// slack.
pub fn entropy_bound_audit(
    f_series: &[(f64, f64)],
    f0: f64,
    c2: f64,
    area: f64,
) -> EntropyBoundAudit {
    let floor = -area / std::f64::consts::E;
    let mut worst_upper = f64::NEG_INFINITY;
    let mut worst_lower = f64::NEG_INFINITY;
    let mut pass = true;
    for &(t, f) in f_series {
        let band = 0.1 * (f0.abs() + c2 * t + area / std::f64::consts::E);
        let upper_excess = f - (f0 + c2 * t);
        let lower_excess = floor - f;
        worst_upper = worst_upper.max(upper_excess);
        worst_lower = worst_lower.max(lower_excess);
        if upper_excess > band || lower_excess > band {
            pass = false;
        }
    }
    EntropyBoundAudit {
        worst_upper_excess: worst_upper,
        worst_lower_excess: worst_lower,
        pass,
    }
}

/// Ratio `‖φ‖_p / (‖∇φ‖₂^θ ‖φ‖₂^{1−θ} + ‖φ‖₂)` with `θ = 1 − 2/p`, i.e. the
/// interpolation inequality with constant 1.
pub fn gn_ratio(phi: &ScalarField, p: f64) -> Result<f64> {
    if !(2.0..=4.0).contains(&p) {
        return Err(Error::Parameter(format!("p must lie in [2,4], got {p}")));
    }
    let theta = 1.0 - 2.0 / p;
    let l2 = phi.norm(NormKind::Lp(2.0))?;
    if l2 == 0.0 {
        return Err(Error::Parameter("degenerate zero field".into()));
    }
    let lp = phi.norm(NormKind::Lp(p))?;
    let grad_l2 = integral_of_grad_square(phi).sqrt();
    Ok(lp / (grad_l2.powf(theta) * l2.powf(1.0 - theta) + l2))
}

/// Check `‖φ‖_p ≤ C_GN (‖∇φ‖₂^θ ‖φ‖₂^{1−θ} + ‖φ‖₂)`; the returned ratio is
/// `≤ 1` exactly when the inequality holds with the given constant.
pub fn gn_check(phi: &ScalarField, p: f64, c_gn: f64) -> Result<f64> {
    if !(c_gn > 0.0) {
        return Err(Error::Parameter(format!(
            "C_GN must be positive, got {c_gn}"
        )));
    }
    Ok(gn_ratio(phi, p)? / c_gn)
}

/// Maximum number of cosine modes per axis in the calibration fields.
const CALIBRATION_MODES: usize = 8;

/// Random truncated cosine series (≤ 8 modes per axis); grid-independent
/// given the same coefficient draw, so refinement studies see the same
/// underlying functions.
pub fn random_smooth_field(grid: Grid, rng: &mut impl Rng) -> ScalarField {
    let m = CALIBRATION_MODES + 1;
    let mut coeff = vec![0.0f64; m * m];
    for c in coeff.iter_mut() {
        *c = rng.random_range(-1.0..1.0);
    }
    field_from_cosine_coeffs(grid, &coeff, m)
}

fn field_from_cosine_coeffs(grid: Grid, coeff: &[f64], m: usize) -> ScalarField {
    let (nx, ny) = (grid.nx(), grid.ny());
    let pi = std::f64::consts::PI;
    // Tabulate cos(kπ x_i / lx) and cos(lπ y_j / ly).
    let mut cos_x = vec![0.0f64; m * nx];
    for k in 0..m {
        for i in 0..nx {
            let (x, _) = grid.cell_center(i, 0);
            cos_x[k * nx + i] = (k as f64 * pi * x / grid.lx()).cos();
        }
    }
    let mut cos_y = vec![0.0f64; m * ny];
    for l in 0..m {
        for j in 0..ny {
            let (_, y) = grid.cell_center(0, j);
            cos_y[l * ny + j] = (l as f64 * pi * y / grid.ly()).cos();
        }
    }
    // Separate the sum: tmp[l][i] = Σ_k a_{kl} cos_x[k][i].
    let mut tmp = vec![0.0f64; m * nx];
    for l in 0..m {
        for k in 0..m {
            let a = coeff[k * m + l];
            for i in 0..nx {
                tmp[l * nx + i] += a * cos_x[k * nx + i];
            }
        }
    }
    let mut out = ScalarField::zeros(grid);
    for j in 0..ny {
        for i in 0..nx {
            let mut s = 0.0;
            for l in 0..m {
                s += tmp[l * nx + i] * cos_y[l * ny + j];
            }
            out.values_mut()[j * nx + i] = s;
        }
    }
    out
}

/// Worst interpolation ratio over a set of fields and exponents.
pub fn gn_max_ratio(fields: &[ScalarField], p_grid: &[f64]) -> Result<f64> {
    if p_grid.is_empty() {
        return Err(Error::Parameter("empty p grid".into()));
    }
    let mut worst = 0.0f64;
    for phi in fields {
        for &p in p_grid {
            match gn_ratio(phi, p) {
                Ok(r) => worst = worst.max(r),
                // Degenerate zero samples are skipped, not fatal.
                Err(Error::Parameter(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(worst)
}

/// Empirical interpolation constant: worst ratio over `sample_count` seeded
/// random smooth fields and the exponent grid, times a 1.05 safety factor.
pub fn calibrate_cgn(grid: Grid, sample_count: usize, p_grid: &[f64], seed: u64) -> Result<f64> {
    if sample_count < 100 {
        return Err(Error::Parameter(format!(
            "calibration needs at least 100 samples, got {sample_count}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<ScalarField> = (0..sample_count)
        .map(|_| random_smooth_field(grid, &mut rng))
        .collect();
    Ok(1.05 * gn_max_ratio(&fields, p_grid)?)
}

/// Empirical heat-semigroup constant: run the stepper with the drift and
/// consumption switched off and take the worst
/// `‖u(t)‖∞ / ((1 + t^{−β/2}) ‖u₀‖_{2/β})` over the sampled times.
pub fn heat_decay_audit(u0: &ScalarField, beta: f64, times: &[f64]) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::Parameter("empty times list".into()));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Parameter(format!(
            "beta must lie in (0,1], got {beta}"
        )));
    }
    if times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Parameter("times must be positive".into()));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let grid = *u0.grid();
    let params = ModelParams::new(0.0, 0.5, beta)?
        .with_consumption(crate::model::ConsumptionLaw::Zero)?
        .with_v0_max(1.0)?;
    let denom0 = u0.norm(NormKind::Lp(2.0 / beta))?;
    if denom0 == 0.0 {
        return Err(Error::Parameter("u0 is identically zero".into()));
    }
    let mut state = SimState::new(
        0.0,
        u0.clone(),
        ScalarField::constant(grid, 1.0),
        Formulation::Original,
    )?;
    let control = StepControl::default();
    let mut worst = 0.0f64;
    for &t in &sorted {
        if t > state.t {
            let adv = AdvanceConfig {
                sample_interval: t - state.t,
                monitor_r: 3.0,
                monitor_cap: None,
            };
            let (next, status) =
                advance_to(state, t, &params, &control, &adv, &mut NullRecorder)?;
            if status.kind != RunKind::Completed {
                return Err(Error::Parameter(format!(
                    "heat run stopped early: {} at t = {}",
                    status.kind, status.t_stop
                )));
            }
            state = next;
        }
        let ratio = state.u.norm(NormKind::Linf)? / ((1.0 + t.powf(-beta / 2.0)) * denom0);
        worst = worst.max(ratio);
    }
    Ok(worst)
}

/// Recorder that assembles a [`DiagnosticsRecord`] per sample, accumulating
/// the cumulative space-time integrals with the trapezoidal rule between
/// samples.
#[derive(Debug, Clone)]
pub struct DiagnosticsCollector {
    records: Vec<DiagnosticsRecord>,
    fisher_floor: f64,
    fisher_floor_engaged: bool,
    prev_fisher: f64,
    prev_u2: f64,
    prev_t: f64,
}

impl Default for DiagnosticsCollector {
    fn default() -> Self {
        Self::new(FISHER_FLOOR)
    }
}

impl DiagnosticsCollector {
    pub fn new(fisher_floor: f64) -> Self {
        Self {
            records: Vec::new(),
            fisher_floor,
            fisher_floor_engaged: false,
            prev_fisher: 0.0,
            prev_u2: 0.0,
            prev_t: 0.0,
        }
    }

    pub fn records(&self) -> &[DiagnosticsRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<DiagnosticsRecord> {
        self.records
    }

    /// True when the Fisher denominator floor engaged at any sample.
    pub fn fisher_floor_engaged(&self) -> bool {
        self.fisher_floor_engaged
    }

    /// Series of `(t, column)` pairs for the auditors.
    pub fn series(&self, pick: impl Fn(&DiagnosticsRecord) -> f64) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t, pick(r))).collect()
    }
}

impl Recorder for DiagnosticsCollector {
    fn sample(&mut self, state: &SimState, params: &ModelParams) -> Result<()> {
        let u = &state.u;
        let (v, w) = match state.formulation {
            Formulation::Original => {
                let v = state.companion.clone();
                let w = v_to_w(&v, params.v0_max()?, params.v_floor())?;
                (v, w)
            }
            Formulation::Transformed => {
                let w = state.companion.clone();
                let v = w_to_v(&w, params.v0_max()?, params.v_floor())?;
                (v, w)
            }
        };
        let (fisher_now, flagged) = fisher_flagged(u, self.fisher_floor);
        self.fisher_floor_engaged |= flagged;
        let u2_now = integral_of_square(u);

        let (fisher_cum, u2_cum) = match self.records.last() {
            None => (0.0, 0.0),
            Some(last) => {
                let dt = state.t - self.prev_t;
                (
                    last.fisher_cum + 0.5 * dt * (self.prev_fisher + fisher_now),
                    last.u2_cum + 0.5 * dt * (self.prev_u2 + u2_now),
                )
            }
        };

        self.records.push(DiagnosticsRecord {
            t: state.t,
            mass: mass(u)?,
            entropy: entropy(u)?,
            f: functional_f(u, &w)?,
            fisher: fisher_now,
            fisher_cum,
            u2_cum,
            gradv2: integral_of_grad_square(&v),
            u_inf: u.norm(NormKind::Linf)?,
            v_min: v.min(),
            v_max: v.max(),
            w_inf: w.norm(NormKind::Linf)?,
            clamp_events: state.clamp_events,
        });
        self.prev_fisher = fisher_now;
        self.prev_u2 = u2_now;
        self.prev_t = state.t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn mass_entropy_f_on_constants() {
        let g = Grid::unit_square(8).unwrap();
        let one = ScalarField::constant(g, 1.0);
        let zero_w = ScalarField::zeros(g);
        assert_relative_eq!(mass(&one).unwrap(), 1.0, max_relative = 1e-13);
        assert!(entropy(&one).unwrap().abs() <= 1e-14);
        assert!(functional_f(&one, &zero_w).unwrap().abs() <= 1e-14);

        let e_field = ScalarField::constant(g, std::f64::consts::E);
        assert_relative_eq!(
            entropy(&e_field).unwrap(),
            std::f64::consts::E,
            max_relative = 1e-13
        );

        let two_w = ScalarField::constant(g, 2.0);
        assert_relative_eq!(functional_f(&one, &two_w).unwrap(), 1.0, max_relative = 1e-13);
    }

    #[test]
    fn functionals_reject_bad_fields() {
        let g = Grid::unit_square(4).unwrap();
        let mut neg = ScalarField::constant(g, 1.0);
        neg.set(0, 0, -0.5);
        assert!(mass(&neg).is_err());
        assert!(entropy(&neg).is_err());
        let one = ScalarField::constant(g, 1.0);
        let mut bad_w = ScalarField::zeros(g);
        bad_w.set(1, 1, -1.0);
        assert!(functional_f(&one, &bad_w).is_err());
    }

    #[test]
    fn fisher_of_constant_is_zero() {
        let g = Grid::unit_square(8).unwrap();
        assert_eq!(fisher(&ScalarField::constant(g, 3.0), FISHER_FLOOR), 0.0);
    }

    // 1D quadrature oracle: for u = 1 + 0.1 cos(πx) the continuum value is
    // ∫₀¹ (0.1π sin πx)² / (1 + 0.1 cos πx) dx, computed here by Simpson's
    // rule, and the grid functional converges to it at second order.
    #[test]
    fn fisher_matches_quadrature_oracle_at_second_order() {
        let pi = std::f64::consts::PI;
        let integrand =
            |x: f64| (0.1 * pi * (pi * x).sin()).powi(2) / (1.0 + 0.1 * (pi * x).cos());
        let n = 1 << 16;
        let h = 1.0 / n as f64;
        let mut simpson = integrand(0.0) + integrand(1.0);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            simpson += w * integrand(k as f64 * h);
        }
        let oracle = simpson * h / 3.0;

        let err_for = |nx: usize| {
            let g = Grid::new(nx, 8, 1.0, 1.0).unwrap();
            let u = ScalarField::from_fn(g, |x, _| 1.0 + 0.1 * (pi * x).cos());
            (fisher(&u, FISHER_FLOOR) - oracle).abs()
        };
        let (e32, e64, e128) = (err_for(32), err_for(64), err_for(128));
        let p1 = (e32 / e64).log2();
        let p2 = (e64 / e128).log2();
        assert!(
            (1.8..=2.2).contains(&p1) && (1.8..=2.2).contains(&p2),
            "orders {p1:.3}, {p2:.3} (oracle {oracle:.6e})"
        );
    }

    #[test]
    fn fisher_floor_flags_zero_regions() {
        let g = Grid::unit_square(8).unwrap();
        let u = ScalarField::from_fn(g, |x, _| if x < 0.5 { 0.0 } else { 1.0 });
        let (value, flagged) = fisher_flagged(&u, FISHER_FLOOR);
        assert!(value.is_finite());
        assert!(flagged);
    }

    #[test]
    fn hypothesis_threshold_values() {
        let (ok, thr) = hypothesis_check(2.0, 0.5, 0.2).unwrap();
        assert_relative_eq!(thr, 0.25, max_relative = 1e-14);
        assert!(ok);
        // Strict inequality at the boundary.
        let (ok, _) = hypothesis_check(2.0, 0.5, 0.25).unwrap();
        assert!(!ok);
        // chi = 1 gives threshold 1 for any gamma.
        for gamma in [0.1, 0.5, 0.9] {
            let (_, thr) = hypothesis_check(1.0, gamma, 0.5).unwrap();
            assert_relative_eq!(thr, 1.0, max_relative = 1e-14);
        }
        assert!(hypothesis_check(0.0, 0.5, 0.2).is_err());
        assert!(hypothesis_check(1.0, 1.5, 0.2).is_err());
        assert!(hypothesis_check(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn hypothesis_threshold_decreases_in_chi() {
        let gamma = 0.3;
        let mut prev = f64::INFINITY;
        for chi in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let (_, thr) = hypothesis_check(chi, gamma, 0.1).unwrap();
            assert!(thr < prev, "threshold not strictly decreasing at chi={chi}");
            prev = thr;
        }
    }

    #[test]
    fn constants_chain_hand_values() {
        // chi = 1, gamma = 0.5, v0 ≡ 0.25, beta = 0.5, u0 ≡ 1 on the unit
        // square, w0 ≡ 0, C_GN = 1.
        let g = Grid::unit_square(8).unwrap();
        let params = ModelParams::new(1.0, 0.5, 0.5).unwrap();
        let u0 = ScalarField::constant(g, 1.0);
        let v0 = ScalarField::constant(g, 0.25);
        let w0 = ScalarField::zeros(g);
        let rep = constants_report(&params, &u0, &v0, &w0, 1.0, None).unwrap();

        assert!(rep.hypothesis && rep.valid);
        assert_relative_eq!(rep.c0, 0.25, max_relative = 1e-14);
        assert_relative_eq!(rep.f0, 0.0, epsilon = 1e-14);
        // c1 = 2(1-β) C^{…} (c0/(2β))^{β/(β−1)} = 1 · (0.25)^{-1} = 4.
        assert_relative_eq!(rep.c1.unwrap(), 4.0, max_relative = 1e-13);
        // c2 = c1/2 + 4^{1/2}·1·1 = 4.
        assert_relative_eq!(rep.c2.unwrap(), 4.0, max_relative = 1e-13);
        // L1 = (2/0.25)·max(1/e, 4) = 32; L2 = max(4, 0) = 4.
        assert_relative_eq!(rep.l1.unwrap(), 32.0, max_relative = 1e-13);
        assert_relative_eq!(rep.l2.unwrap(), 4.0, max_relative = 1e-13);
        // 𝒦 = 2·1·1·(32+4) = 72 and the defining relation holds.
        assert_relative_eq!(rep.k.unwrap(), 72.0, max_relative = 1e-13);
        assert_relative_eq!(
            rep.k.unwrap(),
            2.0 * rep.mass * (rep.l1.unwrap() + 4.0 * rep.mass),
            max_relative = 1e-13
        );
        // C2 = 0.25²·0.5·72 + max(0, 0.25²·0.5·1) = 2.25 + 0.03125.
        assert_relative_eq!(rep.big_c2.unwrap(), 2.28125, max_relative = 1e-13);
        assert!(rep.l3.is_none());
        assert!(rep.corollary_small_mass.is_none());
    }

    #[test]
    fn constants_beta_one_routes_to_corollary() {
        let g = Grid::unit_square(8).unwrap();
        let params = ModelParams::new(1.0, 0.5, 1.0).unwrap();
        let u0 = ScalarField::constant(g, 0.1);
        let v0 = ScalarField::constant(g, 0.25);
        let w0 = ScalarField::zeros(g);
        let rep = constants_report(&params, &u0, &v0, &w0, 1.0, Some(1.0)).unwrap();
        assert!(rep.c1.is_none() && rep.c2.is_none() && rep.l3.is_none());
        // mass bound = (1 − 0.5)/2 = 0.25; m = 0.1 < 0.25.
        assert_relative_eq!(rep.mass_bound_beta1, 0.25, max_relative = 1e-13);
        assert_eq!(rep.corollary_small_mass, Some(true));
    }

    #[test]
    fn constants_invalid_when_hypothesis_fails() {
        let g = Grid::unit_square(8).unwrap();
        let params = ModelParams::new(2.0, 0.5, 0.5).unwrap();
        let u0 = ScalarField::constant(g, 1.0);
        let v0 = ScalarField::constant(g, 0.3); // 0.3 > 0.25 = 2^{-2}
        let w0 = ScalarField::zeros(g);
        let rep = constants_report(&params, &u0, &v0, &w0, 1.0, None).unwrap();
        assert!(!rep.hypothesis && !rep.valid);
        assert!(rep.c0 <= 0.0);
        assert!(rep.c1.is_none() && rep.k.is_none());
    }

    #[test]
    fn constants_report_is_deterministic() {
        let g = Grid::unit_square(8).unwrap();
        let params = ModelParams::new(1.3, 0.4, 0.6).unwrap();
        let u0 = ScalarField::from_fn(g, |x, y| 1.0 + x * y);
        let v0 = ScalarField::from_fn(g, |x, _| 0.2 + 0.05 * x);
        let w0 = v_to_w(&v0, 0.25, 1e-12).unwrap();
        let a = constants_report(&params, &u0, &v0, &w0, 1.4, Some(2.0)).unwrap();
        let b = constants_report(&params, &u0, &v0, &w0, 1.4, Some(2.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn growth_audit_reference_cases() {
        let c = 2.0;
        let zero: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 0.0)).collect();
        let audit = linear_growth_audit(&zero, c).unwrap();
        assert_eq!(audit.max_ratio, 0.0);
        assert!(audit.pass);

        let exact: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, c * (1.0 + k as f64))).collect();
        let audit = linear_growth_audit(&exact, c).unwrap();
        assert_relative_eq!(audit.max_ratio, 1.0, max_relative = 1e-14);
        assert!(audit.pass);

        let double: Vec<(f64, f64)> =
            (0..10).map(|k| (k as f64, 2.0 * c * (1.0 + k as f64))).collect();
        let audit = linear_growth_audit(&double, c).unwrap();
        assert_relative_eq!(audit.max_ratio, 2.0, max_relative = 1e-14);
        assert!(!audit.pass);

        assert!(linear_growth_audit(&[], c).is_err());
        assert!(linear_growth_audit(&exact, 0.0).is_err());
    }

    #[test]
    fn entropy_bound_constant_state_passes() {
        let series: Vec<(f64, f64)> = (0..20).map(|k| (0.1 * k as f64, 0.0)).collect();
        let audit = entropy_bound_audit(&series, 0.0, 1.0, 1.0);
        assert!(audit.pass);
        assert!(audit.worst_upper_excess <= 0.0);
        assert!(audit.worst_lower_excess <= 0.0);
    }

    #[test]
    fn gn_ratio_reference_cases() {
        let g = Grid::unit_square(16).unwrap();
        let c = ScalarField::constant(g, 3.0);
        // Gradient term vanishes: p > 2 gives 1/C_GN, p = 2 gives 1/(2 C_GN).
        assert_relative_eq!(gn_check(&c, 3.0, 2.0).unwrap(), 0.5, max_relative = 1e-12);
        assert_relative_eq!(gn_check(&c, 2.0, 2.0).unwrap(), 0.25, max_relative = 1e-12);
        assert!(gn_ratio(&c, 1.5).is_err());
        assert!(gn_ratio(&c, 4.5).is_err());
        assert!(gn_ratio(&ScalarField::zeros(g), 3.0).is_err());
    }

    #[test]
    fn gn_max_ratio_constant_only_sample_set() {
        let g = Grid::unit_square(16).unwrap();
        let fields = vec![ScalarField::constant(g, 1.0), ScalarField::constant(g, 5.0)];
        let worst = gn_max_ratio(&fields, &[2.0, 3.0, 4.0]).unwrap();
        assert_relative_eq!(worst, 1.0, max_relative = 1e-12);
        // With the safety factor this is the 1.05 of the calibration op.
        assert_relative_eq!(1.05 * worst, 1.05, max_relative = 1e-12);
    }

    #[test]
    fn calibrate_cgn_is_deterministic_and_covers_modes() {
        let g = Grid::unit_square(32).unwrap();
        let p_grid = [2.0, 3.0, 4.0];
        let a = calibrate_cgn(g, 100, &p_grid, 7).unwrap();
        let b = calibrate_cgn(g, 100, &p_grid, 7).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
        assert!(calibrate_cgn(g, 99, &p_grid, 7).is_err());

        // A single cosine mode must satisfy the inequality with the
        // calibrated constant.
        let phi = ScalarField::from_fn(g, |x, y| {
            (std::f64::consts::PI * x).cos() * (std::f64::consts::PI * y).cos()
        });
        for p in p_grid {
            assert!(gn_check(&phi, p, a).unwrap() < 1.0);
        }
    }

    #[test]
    fn calibrate_cgn_stable_under_refinement() {
        let p_grid = [2.0, 2.5, 3.0, 3.5, 4.0];
        let coarse = calibrate_cgn(Grid::unit_square(32).unwrap(), 100, &p_grid, 11).unwrap();
        let fine = calibrate_cgn(Grid::unit_square(64).unwrap(), 100, &p_grid, 11).unwrap();
        let rel = (coarse - fine).abs() / fine;
        assert!(rel <= 0.2, "relative change {rel} exceeds 20%");
    }

    #[test]
    fn heat_decay_constant_field() {
        let g = Grid::unit_square(16).unwrap();
        let u0 = ScalarField::constant(g, 2.0);
        // Constants are heat-invariant: ratio = 1/(1+t^{-1/2}) < 1.
        let c = heat_decay_audit(&u0, 1.0, &[0.5, 1.0]).unwrap();
        assert!(c < 1.0 && c > 0.0);
        let single = heat_decay_audit(&u0, 1.0, &[1.0]).unwrap();
        assert_relative_eq!(single, 0.5, max_relative = 1e-12);
        assert!(heat_decay_audit(&u0, 1.0, &[]).is_err());
        assert!(heat_decay_audit(&u0, 1.5, &[1.0]).is_err());
    }

    proptest! {
        // 𝔉 ≥ −|Ω|/e for nonnegative u, w (pointwise s log s ≥ −1/e).
        #[test]
        fn f_functional_lower_bound(
            uvals in proptest::collection::vec(0.0f64..5.0, 36),
            wvals in proptest::collection::vec(0.0f64..5.0, 36),
        ) {
            let g = Grid::new(6, 6, 1.3, 0.9).unwrap();
            let u = ScalarField::from_values(g, uvals).unwrap();
            let w = ScalarField::from_values(g, wvals).unwrap();
            let f = functional_f(&u, &w).unwrap();
            prop_assert!(f >= -g.area() / std::f64::consts::E - 1e-12);
        }

        // Both sides of the interpolation inequality are 1-homogeneous, so
        // the ratio is scale-invariant.
        #[test]
        fn gn_ratio_scale_invariant(lambda in 1e-3f64..1e3, seed in 0u64..200) {
            let g = Grid::unit_square(12).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phi = random_smooth_field(g, &mut rng);
            prop_assume!(phi.norm(NormKind::Lp(2.0)).unwrap() > 1e-9);
            let mut scaled = phi.clone();
            for v in scaled.values_mut() { *v *= lambda; }
            for p in [2.0, 3.0, 4.0] {
                let a = gn_ratio(&phi, p).unwrap();
                let b = gn_ratio(&scaled, p).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
