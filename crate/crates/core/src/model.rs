//! Model parameters, consumption and sensitivity laws, and the right-hand
//! sides of the original and transformed systems.
//!
//! Original formulation (cell density `u`, signal `v`):
//!
//! ```text
//! u_t = Δu − ∇·(u · χ v^{−γ} ∇v)
//! v_t = Δv − f(u) v
//! ```
//!
//! Transformed formulation (`w = −log(v/‖v₀‖∞)`):
//!
//! ```text
//! u_t = Δu + χ‖v₀‖∞^{1−γ} ∇·(u e^{−(1−γ)w} ∇w)
//! w_t = Δw − |∇w|² + f(u)
//! ```
//!
//! Both `u`-equations are discretized in flux form: the diffusive face flux
//! is the two-point gradient, and the chemotactic face flux upwinds `u` by
//! the sign of the face drift velocity while the companion field enters
//! through arithmetic face averages. Flux form makes `∫ du = 0` exact up to
//! round-off, which is the artifact's hardest invariant.
//!
//! The singular factor `v^{−γ}` is never evaluated below `v_floor`; flooring
//! events are counted, not silently absorbed, since they signal that a run
//! has left the regime where the signal stays away from zero.

use crate::mesh::{Grid, ScalarField};
use crate::{Error, Result};

/// `x^e` with a fast path for the square root, the common exponent here.
#[inline]
pub(crate) fn pow_opt(x: f64, e: f64) -> f64 {
    if e == 0.5 {
        x.sqrt()
    } else if e == 1.0 {
        x
    } else {
        x.powf(e)
    }
}

/// Consumption law `f` appearing in `v_t = Δv − f(u) v`.
///
/// Every law must satisfy `0 ≤ f(s) ≤ s^β` for `s ≥ 0`; custom laws are
/// checked against that bound on a 10⁴ point sample at registration.
#[derive(Clone)]
pub enum ConsumptionLaw {
    /// The extremal admissible law `f(s) = s^β` (`0` for `s < 0`).
    PowerLaw,
    /// `f ≡ 0`; used by the pure-diffusion and heat-semigroup runs.
    Zero,
    /// A registered custom law; second argument is `β`.
    Custom { name: String, f: fn(f64, f64) -> f64 },
}

impl std::fmt::Debug for ConsumptionLaw {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConsumptionLaw::PowerLaw => write!(fm, "PowerLaw"),
            ConsumptionLaw::Zero => write!(fm, "Zero"),
            ConsumptionLaw::Custom { name, .. } => write!(fm, "Custom({name})"),
        }
    }
}

impl ConsumptionLaw {
    #[inline]
    fn eval(&self, s: f64, beta: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self {
            ConsumptionLaw::PowerLaw => pow_opt(s, beta),
            ConsumptionLaw::Zero => 0.0,
            ConsumptionLaw::Custom { f, .. } => f(s, beta),
        }
    }

    /// Check `0 ≤ f(s) ≤ s^β` on a log-spaced 10⁴ point sample of `s`.
    fn verify_bound(&self, beta: f64) -> Result<()> {
        if self.eval(0.0, beta) != 0.0 {
            return Err(Error::Parameter(
                "consumption law must vanish at s = 0".into(),
            ));
        }
        for k in 0..10_000 {
            let s = 10f64.powf(-8.0 + 12.0 * k as f64 / 9_999.0);
            let f = self.eval(s, beta);
            let cap = pow_opt(s, beta);
            if !(f >= 0.0 && f <= cap * (1.0 + 1e-12)) {
                return Err(Error::Parameter(format!(
                    "consumption law violates 0 <= f(s) <= s^beta at s = {s}: f = {f}"
                )));
            }
        }
        Ok(())
    }
}

/// Model parameters and assumption checks.
#[derive(Debug, Clone)]
pub struct ModelParams {
    chi: f64,
    gamma: f64,
    beta: f64,
    v_floor: f64,
    v0_max: Option<f64>,
    consumption: ConsumptionLaw,
}

impl ModelParams {
    /// Create parameters, enforcing `γ ∈ (0,1)` and `β ∈ (0,1]`.
    ///
    /// The analysis assumes `χ > 0`; `χ = 0` is additionally admitted here
    /// because the pure-diffusion runs (manufactured-solution convergence,
    /// heat-semigroup calibration) use the same stepper with the drift
    /// switched off.
    pub fn new(chi: f64, gamma: f64, beta: f64) -> Result<Self> {
        if !(chi >= 0.0) || !chi.is_finite() {
            return Err(Error::Parameter(format!(
                "chi must be non-negative, got {chi}"
            )));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Parameter(format!(
                "gamma must lie in (0,1), got {gamma}"
            )));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Parameter(format!(
                "beta must lie in (0,1], got {beta}"
            )));
        }
        Ok(Self {
            chi,
            gamma,
            beta,
            v_floor: 1e-12,
            v0_max: None,
            consumption: ConsumptionLaw::PowerLaw,
        })
    }

    /// Override the evaluation floor; must satisfy `0 < v_floor ≤ 1e−8`.
    pub fn with_v_floor(mut self, v_floor: f64) -> Result<Self> {
        if !(v_floor > 0.0 && v_floor <= 1e-8) {
            return Err(Error::Parameter(format!(
                "v_floor must lie in (0, 1e-8], got {v_floor}"
            )));
        }
        self.v_floor = v_floor;
        Ok(self)
    }

    /// Cache `‖v₀‖∞` (done once at run start).
    pub fn with_v0_max(mut self, v0_max: f64) -> Result<Self> {
        if !(v0_max > 0.0) || !v0_max.is_finite() {
            return Err(Error::Parameter(format!(
                "v0_max must be positive, got {v0_max}"
            )));
        }
        self.v0_max = Some(v0_max);
        Ok(self)
    }

    /// Install a consumption law after verifying the `(0 ≤ f ≤ s^β)` bound.
    pub fn with_consumption(mut self, law: ConsumptionLaw) -> Result<Self> {
        law.verify_bound(self.beta)?;
        self.consumption = law;
        Ok(self)
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn v_floor(&self) -> f64 {
        self.v_floor
    }
    pub fn consumption(&self) -> &ConsumptionLaw {
        &self.consumption
    }

    /// Cached `‖v₀‖∞`; errors when no run has set it yet.
    pub fn v0_max(&self) -> Result<f64> {
        self.v0_max
            .ok_or_else(|| Error::Parameter("v0_max not set".into()))
    }

    /// Consumption `f(s)` under the installed law.
    #[inline]
    pub fn f_consumption(&self, s: f64) -> f64 {
        self.consumption.eval(s, self.beta)
    }

    /// Singular sensitivity `χ / max(v, v_floor)^γ`.
    ///
    /// Increments `clamps` when the floor engages; the stored field is never
    /// modified.
    #[inline]
    pub fn sensitivity(&self, v: f64, clamps: &mut u64) -> f64 {
        let vf = if v < self.v_floor {
            *clamps += 1;
            self.v_floor
        } else {
            v
        };
        self.chi / pow_opt(vf, self.gamma)
    }
}

/// Right-hand side of either formulation.
#[derive(Debug, Clone)]
pub struct Rhs {
    /// Time derivative of `u`; integrates to 0 up to round-off.
    pub du: ScalarField,
    /// Time derivative of the companion field (`v` or `w`).
    pub second: ScalarField,
}

/// Byproducts of one right-hand-side evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct RhsStats {
    /// Largest face drift speed, used by the advective CFL bound.
    pub max_velocity: f64,
    /// Number of `v_floor` engagements during this evaluation.
    pub clamp_events: u64,
}

/// Reusable buffers for the right-hand-side kernels.
#[derive(Debug, Clone, Default)]
pub(crate) struct Scratch {
    fx: Vec<f64>,
    fy_bot: Vec<f64>,
    fy_top: Vec<f64>,
}

impl Scratch {
    fn prepare(&mut self, grid: &Grid) {
        self.fx.clear();
        self.fx.resize(grid.nx() + 1, 0.0);
        self.fy_bot.clear();
        self.fy_bot.resize(grid.nx(), 0.0);
        self.fy_top.clear();
        self.fy_top.resize(grid.nx(), 0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RhsKind {
    Original,
    Transformed,
}

/// Fused evaluation of `du` and the companion derivative.
///
/// `du` is assembled as the divergence of per-face fluxes
/// `grad_u − û·vel`, where `vel` is the face drift speed of the active
/// formulation and `û` the upwind cell value. Boundary faces carry no flux.
pub(crate) fn eval_rhs(
    kind: RhsKind,
    grid: &Grid,
    u: &[f64],
    comp: &[f64],
    params: &ModelParams,
    du: &mut [f64],
    dcomp: &mut [f64],
    scratch: &mut Scratch,
) -> Result<RhsStats> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (ihx, ihy) = (1.0 / grid.hx(), 1.0 / grid.hy());
    let mut stats = RhsStats::default();
    scratch.prepare(grid);

    // Drift magnitude scale for the transformed flux; unused otherwise.
    let chi_v0 = match kind {
        RhsKind::Original => 0.0,
        RhsKind::Transformed => params.chi() * pow_opt(params.v0_max()?, 1.0 - params.gamma()),
    };
    let one_minus_gamma = 1.0 - params.gamma();

    // Face drift velocity of the active formulation. Positive values move
    // u toward increasing index.
    macro_rules! face_velocity {
        ($cl:expr, $cr:expr, $ih:expr) => {{
            let grad = ($cr - $cl) * $ih;
            match kind {
                RhsKind::Original => {
                    let vf = 0.5 * ($cl + $cr);
                    params.sensitivity(vf, &mut stats.clamp_events) * grad
                }
                RhsKind::Transformed => {
                    let wf = 0.5 * ($cl + $cr);
                    -chi_v0 * (-one_minus_gamma * wf).exp() * grad
                }
            }
        }};
    }

    // x-faces, one row at a time; flux buffer has zero boundary entries.
    let mut max_vel = 0.0f64;
    for j in 0..ny {
        let row = j * nx;
        let urow = &u[row..row + nx];
        let crow = &comp[row..row + nx];
        for i in 1..nx {
            let vel = face_velocity!(crow[i - 1], crow[i], ihx);
            let upwind = if vel > 0.0 { urow[i - 1] } else { urow[i] };
            let grad_u = (urow[i] - urow[i - 1]) * ihx;
            scratch.fx[i] = grad_u - upwind * vel;
            max_vel = max_vel.max(vel.abs());
        }
        let durow = &mut du[row..row + nx];
        for i in 0..nx {
            durow[i] = (scratch.fx[i + 1] - scratch.fx[i]) * ihx;
        }
    }

    // y-faces, sweeping rows with a rolling pair of flux buffers.
    for i in 0..nx {
        scratch.fy_bot[i] = 0.0;
    }
    for j in 0..ny {
        if j + 1 < ny {
            let lo = j * nx;
            let hi = lo + nx;
            for i in 0..nx {
                let vel = face_velocity!(comp[lo + i], comp[hi + i], ihy);
                let upwind = if vel > 0.0 { u[lo + i] } else { u[hi + i] };
                let grad_u = (u[hi + i] - u[lo + i]) * ihy;
                scratch.fy_top[i] = grad_u - upwind * vel;
                max_vel = max_vel.max(vel.abs());
            }
        } else {
            for i in 0..nx {
                scratch.fy_top[i] = 0.0;
            }
        }
        let row = j * nx;
        for i in 0..nx {
            du[row + i] += (scratch.fy_top[i] - scratch.fy_bot[i]) * ihy;
        }
        std::mem::swap(&mut scratch.fy_bot, &mut scratch.fy_top);
    }
    stats.max_velocity = max_vel;

    // Companion derivative: 5-point Laplacian plus the pointwise terms.
    let ihx2 = ihx * ihx;
    let ihy2 = ihy * ihy;
    match kind {
        RhsKind::Original => {
            for j in 0..ny {
                let row = j * nx;
                for i in 0..nx {
                    let c = row + i;
                    let vc = comp[c];
                    let w = if i > 0 { comp[c - 1] } else { vc };
                    let e = if i + 1 < nx { comp[c + 1] } else { vc };
                    let s = if j > 0 { comp[c - nx] } else { vc };
                    let n = if j + 1 < ny { comp[c + nx] } else { vc };
                    let lap = (e - 2.0 * vc + w) * ihx2 + (n - 2.0 * vc + s) * ihy2;
                    dcomp[c] = lap - params.f_consumption(u[c]) * vc;
                }
            }
        }
        RhsKind::Transformed => {
            for j in 0..ny {
                let row = j * nx;
                for i in 0..nx {
                    let c = row + i;
                    let wc = comp[c];
                    let ww = if i > 0 { comp[c - 1] } else { wc };
                    let we = if i + 1 < nx { comp[c + 1] } else { wc };
                    let ws = if j > 0 { comp[c - nx] } else { wc };
                    let wn = if j + 1 < ny { comp[c + nx] } else { wc };
                    let lap = (we - 2.0 * wc + ww) * ihx2 + (wn - 2.0 * wc + ws) * ihy2;
                    // Center-averaged face gradients; a boundary face is 0.
                    let gw_w = if i > 0 { (wc - ww) * ihx } else { 0.0 };
                    let gw_e = if i + 1 < nx { (we - wc) * ihx } else { 0.0 };
                    let gw_s = if j > 0 { (wc - ws) * ihy } else { 0.0 };
                    let gw_n = if j + 1 < ny { (wn - wc) * ihy } else { 0.0 };
                    let gx = 0.5 * (gw_w + gw_e);
                    let gy = 0.5 * (gw_s + gw_n);
                    dcomp[c] = lap - (gx * gx + gy * gy) + params.f_consumption(u[c]);
                }
            }
        }
    }

    Ok(stats)
}

fn check_pair(u: &ScalarField, comp: &ScalarField) -> Result<()> {
    if u.grid() != comp.grid() {
        return Err(Error::ShapeMismatch(
            "u and companion field live on different grids".into(),
        ));
    }
    Ok(())
}

fn rhs_pair(
    kind: RhsKind,
    u: &ScalarField,
    comp: &ScalarField,
    params: &ModelParams,
) -> Result<(Rhs, RhsStats)> {
    check_pair(u, comp)?;
    let grid = *u.grid();
    let mut du = ScalarField::zeros(grid);
    let mut dcomp = ScalarField::zeros(grid);
    let mut scratch = Scratch::default();
    let stats = eval_rhs(
        kind,
        &grid,
        u.values(),
        comp.values(),
        params,
        du.values_mut(),
        dcomp.values_mut(),
        &mut scratch,
    )?;
    Ok((
        Rhs {
            du,
            second: dcomp,
        },
        stats,
    ))
}

/// Right-hand side of the original `(u, v)` system.
pub fn rhs_original(u: &ScalarField, v: &ScalarField, params: &ModelParams) -> Result<Rhs> {
    rhs_original_with_stats(u, v, params).map(|(rhs, _)| rhs)
}

/// [`rhs_original`] plus the max face velocity and clamp count.
pub fn rhs_original_with_stats(
    u: &ScalarField,
    v: &ScalarField,
    params: &ModelParams,
) -> Result<(Rhs, RhsStats)> {
    rhs_pair(RhsKind::Original, u, v, params)
}

/// Right-hand side of the transformed `(u, w)` system.
pub fn rhs_transformed(u: &ScalarField, w: &ScalarField, params: &ModelParams) -> Result<Rhs> {
    rhs_transformed_with_stats(u, w, params).map(|(rhs, _)| rhs)
}

/// [`rhs_transformed`] plus the max face velocity and clamp count.
pub fn rhs_transformed_with_stats(
    u: &ScalarField,
    w: &ScalarField,
    params: &ModelParams,
) -> Result<(Rhs, RhsStats)> {
    rhs_pair(RhsKind::Transformed, u, w, params)
}

/// Change of variables `w = −log(max(v, v_floor)/v0_max)`.
pub fn v_to_w(v: &ScalarField, v0_max: f64, v_floor: f64) -> Result<ScalarField> {
    if !(v0_max > 0.0) || !v0_max.is_finite() {
        return Err(Error::Parameter(format!(
            "v0_max must be positive, got {v0_max}"
        )));
    }
    let mut out = v.clone();
    for x in out.values_mut() {
        *x = -(x.max(v_floor) / v0_max).ln();
    }
    Ok(out)
}

/// Inverse transformation `v = v0_max · e^{−w}`, floored at `v_floor` so a
/// huge `w` cannot underflow the signal to exactly zero.
pub fn w_to_v(w: &ScalarField, v0_max: f64, v_floor: f64) -> Result<ScalarField> {
    if !(v0_max > 0.0) || !v0_max.is_finite() {
        return Err(Error::Parameter(format!(
            "v0_max must be positive, got {v0_max}"
        )));
    }
    let mut out = w.clone();
    for x in out.values_mut() {
        *x = (v0_max * (-*x).exp()).max(v_floor);
    }
    Ok(out)
}
