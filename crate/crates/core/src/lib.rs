//! Finite-volume simulator and inequality auditor for a two-dimensional
//! chemotaxis-consumption system with singular sensitivity.
//!
//! The crate simulates the coupled cell/signal system
//!
//! ```text
//! u_t = Δu − χ ∇·(u v^{−γ} ∇v)        (cell density)
//! v_t = Δv − f(u) v                    (consumed signal)
//! ```
//!
//! on a rectangle with zero-flux boundaries, together with its logarithmic
//! substitution `w = −log(v / ‖v₀‖∞)`, and audits every quantitative object
//! the analysis of that system is built on: conserved mass, the entropy-type
//! functional `𝔉 = ∫u log u + ½∫u w`, the smallness threshold
//! `‖v₀‖∞ < χ^{1/(γ−1)}`, the constants ledger derived from it, and
//! linear-in-time growth bounds for the tracked quantities.
//!
//! Module layout mirrors the pipeline: [`mesh`] holds the grid and discrete
//! operators, [`model`] the right-hand sides and parameter laws, [`stepper`]
//! the adaptive explicit time loop, [`functionals`] the diagnostics and
//! inequality audits, and [`harness`] the configuration, scenario, sweep and
//! file-format layer used by the `chemsim` binary.

pub mod functionals;
pub mod harness;
pub mod mesh;
pub mod model;
pub mod stepper;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A field contains a NaN or infinite entry where finiteness is required.
    #[error("non-finite field")]
    NonFiniteField,
    /// Two fields (or a field and a grid) do not share the same shape.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// A scalar parameter is outside its admissible domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// A field violates an admissibility requirement (sign, positivity).
    #[error("inadmissible field: {0}")]
    Admissibility(String),
    /// Configuration parse or validation failure; `path` is the key path.
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    /// Snapshot file ended before the declared payload.
    #[error("truncated snapshot")]
    TruncatedSnapshot,
    /// Snapshot header is not in the expected format.
    #[error("bad snapshot: {0}")]
    SnapshotFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub use functionals::{
    calibrate_cgn, constants_report, entropy, entropy_bound_audit, fisher, functional_f, gn_check,
    heat_decay_audit, hypothesis_check, linear_growth_audit, mass, ConstantsReport,
    DiagnosticsCollector, DiagnosticsRecord,
};
pub use harness::{
    parse_config, run_scenario, run_sweep, ParsedConfig, ScenarioConfig, ScenarioOutput,
    SweepConfig,
};
pub use mesh::{FaceFlux, Grid, NormKind, ScalarField};
pub use model::{rhs_original, rhs_transformed, v_to_w, w_to_v, ConsumptionLaw, ModelParams, Rhs};
pub use stepper::{
    advance_to, blow_up_monitor, stable_dt, step, AdvanceConfig, Formulation, Recorder, RunKind,
    RunStatus, SimState, StepControl,
};
