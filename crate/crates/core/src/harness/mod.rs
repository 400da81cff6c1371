//! Configuration, scenario execution, sweeps, convergence studies and all
//! file I/O (diagnostics CSV, constants reports, binary snapshots).

pub mod config;
pub mod convergence;
pub mod generators;
pub mod scenario;
pub mod snapshot;
pub mod sweep;

pub use config::{
    parse_config, parse_config_with_overrides, OutputPaths, ParsedConfig, ScenarioConfig,
    SweepConfig,
};
pub use convergence::{
    convergence_study, formulation_discrepancy, mms_heat_error, ConvergenceReport, LevelValue,
};
pub use generators::InitialData;
pub use scenario::{
    audit_records, constants_lookup, constants_text, diagnostics_csv, fmt_f64, materialize,
    parse_diagnostics_csv, run_scenario, self_calibrated_growth, write_outputs, RunAudits,
    ScenarioOutput, CSV_HEADER,
};
pub use snapshot::{read_snapshot, snapshot_from_bytes, snapshot_to_bytes, write_snapshot};
pub use sweep::{run_sweep, sweep_csv, SweepOutput, SweepRow};
