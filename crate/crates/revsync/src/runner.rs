//! The `run`, `sweep`, and `bench` commands behind the CLI.
//!
//! Every command reads one TOML experiment file and writes CSV artifacts
//! with fixed headers into the output directory. Rows embed the seed and
//! the hash of the config file they came from. Numbers use scientific
//! notation with nine fractional digits; re-running a command with the same
//! inputs reproduces the files byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, LoadedConfig, SchemeName, SweepCell};
use crate::sim::{estimator_benchmark, run_simulation, RunReport, SimError};

pub const RUN_REPORT_HEADER: &str =
    "scheme,si,n_bm,seed,config_hash,skew_mse,meas_time_mse,n_tx,n_rx";
pub const TRACE_HEADER: &str = "kind,t,error,seed,config_hash";
pub const SWEEP_AGGREGATE_HEADER: &str =
    "scheme,si,n_bm,seeds,config_hash,skew_mse,meas_time_mse,n_tx,n_rx";
pub const BENCH_HEADER: &str = "estimator,k,mse,bound,seed,config_hash";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for configuration/schema problems, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Sim(SimError::InvalidConfig { .. }) => 2,
            _ => 3,
        }
    }
}

/// Scientific notation with nine fractional digits; `nan` for absent
/// metrics (a scheme without skew estimation has no skew MSE).
fn sci(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.9e}")
    }
}

fn opt(x: Option<f64>) -> String {
    sci(x.unwrap_or(f64::NAN))
}

fn run_row(scheme: SchemeName, si: f64, n_bm: u32, seed: u64, hash: &str, r: &RunReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        scheme.label(),
        si,
        n_bm,
        seed,
        hash,
        opt(r.skew_mse),
        opt(r.meas_time_mse),
        r.n_tx,
        r.n_rx
    )
}

/// Execute the top-level run of a config file; writes `run_report.csv` and,
/// when tracing is enabled, `trace.csv`.
pub fn cmd_run(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    quiet: bool,
) -> Result<(), CliError> {
    let LoadedConfig { config, hash } = ExperimentConfig::load(config_path)?;
    let run_cfg = config.base_run(seed_override)?;
    let report = run_simulation(&run_cfg)?;
    fs::create_dir_all(out_dir)?;

    let mut csv = String::from(RUN_REPORT_HEADER);
    csv.push('\n');
    csv.push_str(&run_row(
        config.scheme,
        run_cfg.si,
        bundle_of(&config),
        run_cfg.seed,
        &hash,
        &report,
    ));
    csv.push('\n');
    fs::write(out_dir.join("run_report.csv"), csv)?;

    if run_cfg.record_traces {
        let mut trace = String::from(TRACE_HEADER);
        trace.push('\n');
        for s in &report.skew_trace {
            writeln!(trace, "skew,{},{},{},{}", sci(s.t), sci(s.error), run_cfg.seed, hash)
                .expect("string write");
        }
        for s in &report.meas_trace {
            writeln!(trace, "meas,{},{},{},{}", sci(s.t), sci(s.error), run_cfg.seed, hash)
                .expect("string write");
        }
        fs::write(out_dir.join("trace.csv"), trace)?;
    }

    if !quiet {
        println!(
            "run {}: skew_mse={} meas_time_mse={} n_tx={} n_rx={} -> {}",
            config.scheme.label(),
            opt(report.skew_mse),
            opt(report.meas_time_mse),
            report.n_tx,
            report.n_rx,
            out_dir.display()
        );
    }
    Ok(())
}

fn bundle_of(config: &ExperimentConfig) -> u32 {
    config.n_bm.unwrap_or(1)
}

/// Execute the sweep grid; writes per-seed `sweep_rows.csv` and per-cell
/// `sweep_aggregate.csv` with MSEs averaged across seeds.
pub fn cmd_sweep(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    quiet: bool,
) -> Result<(), CliError> {
    let LoadedConfig { config, hash } = ExperimentConfig::load(config_path)?;
    let cells = config.sweep_cells(seed_override)?;
    // Cells run in parallel; collect() preserves the deterministic cell
    // order, so output rows never depend on scheduling.
    let results: Vec<(SweepCell, RunReport)> = cells
        .par_iter()
        .map(|cell| {
            let run_cfg = config.run_config(cell.scheme, cell.si, cell.n_bm, cell.seed)?;
            let report = run_simulation(&run_cfg)?;
            Ok::<_, CliError>((*cell, report))
        })
        .collect::<Result<Vec<_>, _>>()?;

    fs::create_dir_all(out_dir)?;
    let mut rows = String::from(RUN_REPORT_HEADER);
    rows.push('\n');
    for (cell, report) in &results {
        rows.push_str(&run_row(cell.scheme, cell.si, cell.n_bm, cell.seed, &hash, report));
        rows.push('\n');
    }
    fs::write(out_dir.join("sweep_rows.csv"), rows)?;

    let mut agg = String::from(SWEEP_AGGREGATE_HEADER);
    agg.push('\n');
    let mut i = 0;
    while i < results.len() {
        let (cell, _) = &results[i];
        let mut j = i;
        while j < results.len() {
            let (c, _) = &results[j];
            if (c.scheme, c.si, c.n_bm) != (cell.scheme, cell.si, cell.n_bm) {
                break;
            }
            j += 1;
        }
        let group = &results[i..j];
        let seeds = group.len() as u64;
        let mean = |f: fn(&RunReport) -> Option<f64>| -> f64 {
            let mut sum = 0.0;
            for (_, r) in group {
                match f(r) {
                    Some(v) => sum += v,
                    None => return f64::NAN,
                }
            }
            sum / seeds as f64
        };
        let (n_tx, n_rx) = (group[0].1.n_tx, group[0].1.n_rx);
        // message counts are schedule-determined and must not vary by seed
        debug_assert!(group.iter().all(|(_, r)| r.n_tx == n_tx && r.n_rx == n_rx));
        writeln!(
            agg,
            "{},{},{},{},{},{},{},{},{}",
            cell.scheme.label(),
            cell.si,
            cell.n_bm,
            seeds,
            hash,
            sci(mean(|r| r.skew_mse)),
            sci(mean(|r| r.meas_time_mse)),
            n_tx,
            n_rx
        )
        .expect("string write");
        i = j;
    }
    fs::write(out_dir.join("sweep_aggregate.csv"), agg)?;

    if !quiet {
        println!(
            "sweep: {} cells x seeds -> {}",
            results.len(),
            out_dir.display()
        );
    }
    Ok(())
}

/// Execute the Monte-Carlo estimator benchmark; writes `mse_vs_k.csv` with
/// one row per estimator per message budget.
pub fn cmd_bench(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    quiet: bool,
) -> Result<(), CliError> {
    let LoadedConfig { config, hash } = ExperimentConfig::load(config_path)?;
    let bench_cfg = config.bench_config(seed_override)?;
    let curves = estimator_benchmark(&bench_cfg)?;
    fs::create_dir_all(out_dir)?;
    let mut csv = String::from(BENCH_HEADER);
    csv.push('\n');
    for curve in &curves {
        for p in &curve.points {
            writeln!(
                csv,
                "{},{},{},{},{},{}",
                curve.estimator.name(),
                p.messages,
                sci(p.mse),
                sci(p.bound),
                bench_cfg.seed,
                hash
            )
            .expect("string write");
        }
    }
    fs::write(out_dir.join("mse_vs_k.csv"), csv)?;
    if !quiet {
        println!(
            "bench: {} estimators, {} runs -> {}",
            curves.len(),
            bench_cfg.runs,
            out_dir.display()
        );
    }
    Ok(())
}
