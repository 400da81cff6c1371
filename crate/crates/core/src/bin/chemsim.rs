//! Command-line front end.
//!
//! Exit codes: 0 = run completed with all hard audits passing, 2 = the run
//! stopped with `BlowUpSuspected`/`DtUnderflow` (or an audit failed), 1 =
//! configuration or runtime error.

use chemsim::harness::{
    config::{parse_config_with_overrides, ParsedConfig, ScenarioConfig},
    convergence::convergence_study,
    scenario::{
        self, constants_lookup, fmt_f64, parse_diagnostics_csv, run_scenario,
        self_calibrated_growth, write_outputs, DEFAULT_P_GRID,
    },
    sweep::run_sweep,
};
use chemsim::functionals::{calibrate_cgn, entropy_bound_audit, heat_decay_audit};
use chemsim::stepper::RunKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "chemsim",
    version,
    about = "Finite-volume simulator and inequality auditor for a 2D chemotaxis-consumption system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario and write CSV, constants report and snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override one config key (repeatable), e.g. --set params.chi=2.5
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Directory for the output files.
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Run the sweep described by the config's [sweep] table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Re-run the inequality auditors on an existing diagnostics CSV.
    Audit {
        #[arg(long)]
        csv: PathBuf,
        /// Constants report written by the run that produced the CSV.
        #[arg(long)]
        constants: PathBuf,
    },
    /// Calibrate the empirical constants C_GN (and C_S with --heat-times).
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated sample times for the heat-semigroup constant.
        #[arg(long, value_delimiter = ',')]
        heat_times: Vec<f64>,
    },
    /// Grid-refinement study: manufactured-solution order and
    /// formulation discrepancy.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![16, 32, 64])]
        levels: Vec<usize>,
        #[arg(long, default_value_t = 0.1)]
        mms_horizon: f64,
        #[arg(long, default_value_t = 1.0)]
        equivalence_horizon: f64,
    },
}

fn load_scenario(path: &PathBuf, overrides: &[String]) -> Result<ScenarioConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    match parse_config_with_overrides(&text, overrides).map_err(|e| e.to_string())? {
        ParsedConfig::Scenario(s) => Ok(s),
        ParsedConfig::Sweep(_) => Err("config has a [sweep] table; use the sweep subcommand".into()),
    }
}

fn cmd_run(config: PathBuf, set: Vec<String>, output_dir: PathBuf) -> Result<u8, String> {
    let cfg = load_scenario(&config, &set)?;
    let out = run_scenario(&cfg).map_err(|e| e.to_string())?;
    write_outputs(&cfg, &out, &output_dir).map_err(|e| e.to_string())?;

    println!("status = {} at t = {}", out.status.kind, fmt_f64(out.status.t_stop));
    println!("detail = {}", out.status.detail);
    println!(
        "hypothesis = {} (threshold {} vs v0_inf {})",
        out.audits.hypothesis,
        fmt_f64(out.audits.threshold),
        fmt_f64(out.constants.v0_inf)
    );
    println!("c_gn = {}", fmt_f64(out.c_gn));
    println!("mass_drift_rel = {}", fmt_f64(out.audits.mass_drift_rel));
    println!(
        "growth_ratio fisher_cum = {} entropy = {} w_inf = {}",
        fmt_f64(out.audits.growth_fisher_cum.max_ratio),
        fmt_f64(out.audits.growth_entropy.max_ratio),
        fmt_f64(out.audits.growth_w_inf.max_ratio)
    );
    println!(
        "entropy_bound upper_excess = {} lower_excess = {} pass = {}",
        fmt_f64(out.audits.entropy_bound.worst_upper_excess),
        fmt_f64(out.audits.entropy_bound.worst_lower_excess),
        out.audits.entropy_bound.pass
    );
    println!("clamp_events = {}", out.audits.clamp_events);
    if out.audits.fisher_floor_engaged {
        println!("note: fisher denominator floor engaged");
    }
    println!(
        "wrote {} {} {} {}",
        output_dir.join(&cfg.output.csv).display(),
        output_dir.join(&cfg.output.constants).display(),
        output_dir.join(&cfg.output.snapshot_u).display(),
        output_dir.join(&cfg.output.snapshot_v).display()
    );

    Ok(match out.status.kind {
        RunKind::Completed => {
            if out.audits.hard_pass() {
                0
            } else {
                println!("hard audits FAILED");
                2
            }
        }
        RunKind::BlowUpSuspected | RunKind::DtUnderflow => 2,
    })
}

fn cmd_sweep(config: PathBuf, set: Vec<String>, output_dir: PathBuf) -> Result<u8, String> {
    let text = std::fs::read_to_string(&config).map_err(|e| format!("{}: {e}", config.display()))?;
    let sweep = match parse_config_with_overrides(&text, &set).map_err(|e| e.to_string())? {
        ParsedConfig::Sweep(s) => s,
        ParsedConfig::Scenario(_) => {
            return Err("config has no [sweep] table; use the run subcommand".into())
        }
    };
    let out = run_sweep(&sweep).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(&output_dir).map_err(|e| e.to_string())?;
    let path = output_dir.join(&sweep.csv);
    std::fs::write(&path, out.csv.as_bytes()).map_err(|e| e.to_string())?;
    let failures = out.rows.iter().filter(|r| r.error.is_some()).count();
    println!(
        "swept {} points ({} failed rows), wrote {}",
        out.rows.len(),
        failures,
        path.display()
    );
    Ok(0)
}

fn cmd_audit(csv: PathBuf, constants: PathBuf) -> Result<u8, String> {
    let text = std::fs::read_to_string(&csv).map_err(|e| format!("{}: {e}", csv.display()))?;
    let records = parse_diagnostics_csv(&text).map_err(|e| e.to_string())?;
    let ctext =
        std::fs::read_to_string(&constants).map_err(|e| format!("{}: {e}", constants.display()))?;
    let f0 = constants_lookup(&ctext, "f0").map_err(|e| e.to_string())?;
    let area = constants_lookup(&ctext, "area").map_err(|e| e.to_string())?;
    // In the corollary regime c2 is unavailable; only the floor binds then.
    let c2 = constants_lookup(&ctext, "c2").unwrap_or(f64::INFINITY);

    let series = |pick: fn(&chemsim::DiagnosticsRecord) -> f64| -> Vec<(f64, f64)> {
        records.iter().map(|r| (r.t, pick(r))).collect()
    };
    let mut all_pass = true;
    for (name, data) in [
        ("fisher_cum", series(|r| r.fisher_cum)),
        ("entropy", series(|r| r.entropy)),
        ("w_inf", series(|r| r.w_inf)),
    ] {
        let audit = self_calibrated_growth(&data).map_err(|e| e.to_string())?;
        all_pass &= audit.pass;
        println!(
            "growth {name}: C = {} max_ratio = {} pass = {}",
            fmt_f64(audit.c),
            fmt_f64(audit.max_ratio),
            audit.pass
        );
    }
    let f_series: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.f)).collect();
    let eb = entropy_bound_audit(&f_series, f0, c2, area);
    all_pass &= eb.pass;
    println!(
        "entropy_bound: upper_excess = {} lower_excess = {} pass = {}",
        fmt_f64(eb.worst_upper_excess),
        fmt_f64(eb.worst_lower_excess),
        eb.pass
    );
    Ok(if all_pass { 0 } else { 2 })
}

fn cmd_calibrate(
    config: PathBuf,
    set: Vec<String>,
    samples: Option<usize>,
    seed: Option<u64>,
    heat_times: Vec<f64>,
) -> Result<u8, String> {
    let cfg = load_scenario(&config, &set)?;
    let samples = samples.unwrap_or(cfg.calibration_samples);
    let seed = seed.unwrap_or(cfg.seed);
    let c_gn =
        calibrate_cgn(cfg.grid, samples, &DEFAULT_P_GRID, seed).map_err(|e| e.to_string())?;
    println!("c_gn = {}", fmt_f64(c_gn));
    if !heat_times.is_empty() {
        let mat = scenario::materialize(&cfg).map_err(|e| e.to_string())?;
        let c_s =
            heat_decay_audit(&mat.u0, cfg.beta, &heat_times).map_err(|e| e.to_string())?;
        println!("c_s = {}", fmt_f64(c_s));
    }
    Ok(0)
}

fn cmd_converge(
    config: PathBuf,
    set: Vec<String>,
    levels: Vec<usize>,
    mms_horizon: f64,
    equivalence_horizon: f64,
) -> Result<u8, String> {
    let cfg = load_scenario(&config, &set)?;
    let report = convergence_study(&cfg, &levels, mms_horizon, equivalence_horizon)
        .map_err(|e| e.to_string())?;
    for lv in &report.mms_errors {
        println!("mms n = {} error = {}", lv.n, fmt_f64(lv.value));
    }
    for (w, order) in report.mms_errors.windows(2).zip(&report.mms_orders) {
        println!("mms order {}->{} = {}", w[0].n, w[1].n, fmt_f64(*order));
    }
    for lv in &report.discrepancies {
        println!("discrepancy n = {} value = {}", lv.n, fmt_f64(lv.value));
    }
    for (w, ratio) in report.discrepancies.windows(2).zip(&report.discrepancy_ratios) {
        println!("discrepancy ratio {}->{} = {}", w[0].n, w[1].n, fmt_f64(*ratio));
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            set,
            output_dir,
        } => cmd_run(config, set, output_dir),
        Command::Sweep {
            config,
            set,
            output_dir,
        } => cmd_sweep(config, set, output_dir),
        Command::Audit { csv, constants } => cmd_audit(csv, constants),
        Command::Calibrate {
            config,
            set,
            samples,
            seed,
            heat_times,
        } => cmd_calibrate(config, set, samples, seed, heat_times),
        Command::Converge {
            config,
            set,
            levels,
            mms_horizon,
            equivalence_horizon,
        } => cmd_converge(config, set, levels, mms_horizon, equivalence_horizon),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
