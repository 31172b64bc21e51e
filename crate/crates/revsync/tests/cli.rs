//! End-to-end tests of the `revsync` binary and its CSV artifacts.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_revsync");

const BASE_CONFIG: &str = r#"# Table-style single run
scheme = "proposed"
estimator = "cr"
n_bm = 1
si = 1.0
seed = 7

[delay]
kind = "gaussian"
mean = 333.56e-9
sigma = 1e-9
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn revsync")
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn run_emits_expected_row() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), BASE_CONFIG);
    let out_dir = tmp.path().join("out");
    let out = run(&["run", cfg.to_str().unwrap(), "-o", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&out_dir.join("run_report.csv"));
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scheme,si,n_bm,seed,config_hash,skew_mse,meas_time_mse,n_tx,n_rx"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "proposed");
    assert_eq!(row[1], "1");
    assert_eq!(row[2], "1");
    assert_eq!(row[3], "7");
    assert_eq!(row.len(), 9);
    // one report per measurement, one beacon per second of the hour
    assert_eq!(row[7], "100");
    assert_eq!(row[8], "3600");
    let skew_mse: f64 = row[5].parse().unwrap();
    assert!(skew_mse > 0.0 && skew_mse < 1e-20);
}

#[test]
fn identical_invocations_reproduce_bytes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &BASE_CONFIG.replace("seed = 7", "seed = 7\ntrace = true"),
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = run(&["run", cfg.to_str().unwrap(), "-o", dir.to_str().unwrap(), "--quiet"]);
        assert!(out.status.success());
        assert!(out.stdout.is_empty(), "quiet run must not print");
    }
    assert_eq!(read(&a.join("run_report.csv")), read(&b.join("run_report.csv")));
    assert_eq!(read(&a.join("trace.csv")), read(&b.join("trace.csv")));
    assert!(read(&a.join("trace.csv")).starts_with("kind,t,error,seed,config_hash"));
}

#[test]
fn seed_override_changes_metrics_not_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), BASE_CONFIG);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(&["run", cfg.to_str().unwrap(), "-o", a.to_str().unwrap()]);
    let out = run(&[
        "run",
        cfg.to_str().unwrap(),
        "-o",
        b.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    assert!(out.status.success());
    let row_a: Vec<String> = read(&a.join("run_report.csv"))
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect();
    let row_b: Vec<String> = read(&b.join("run_report.csv"))
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect();
    assert_eq!(row_b[3], "99");
    assert_ne!(row_a[5], row_b[5], "different seeds, different noise");
    assert_eq!(row_a[7], row_b[7]);
    assert_eq!(row_a[8], row_b[8]);
}

#[test]
fn invalid_si_exits_2_naming_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &BASE_CONFIG.replace("si = 1.0", "si = 0.0"));
    let out_dir = tmp.path().join("out");
    let out = run(&["run", cfg.to_str().unwrap(), "-o", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("si"), "stderr must name the field: {stderr}");
}

#[test]
fn unknown_key_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{BASE_CONFIG}mystery_knob = 3\n"));
    let out = run(&["run", cfg.to_str().unwrap(), "-o", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery_knob"));
}

const SWEEP_CONFIG: &str = r#"
scheme = "proposed"
si = 1.0
horizon = 120.0
n_measurements = 10
warmup = 20.0
seed = 3

[delay]
kind = "gaussian"
mean = 333.56e-9
sigma = 1e-9

[sweep]
si = [10.0, 1.0]
n_bm = [1, 5]
schemes = ["proposed", "two-way"]
seeds = 2
"#;

#[test]
fn sweep_produces_rows_and_aggregate() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SWEEP_CONFIG);
    let out_dir = tmp.path().join("out");
    let out = run(&["sweep", cfg.to_str().unwrap(), "-o", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read(&out_dir.join("sweep_rows.csv"));
    // proposed: 2 si x 2 n_bm x 2 seeds = 8; two-way collapses n_bm: 4
    assert_eq!(rows.lines().count(), 1 + 12);
    let agg = read(&out_dir.join("sweep_aggregate.csv"));
    assert_eq!(
        agg.lines().next().unwrap(),
        "scheme,si,n_bm,seeds,config_hash,skew_mse,meas_time_mse,n_tx,n_rx"
    );
    assert_eq!(agg.lines().count(), 1 + 6);
    // two-way rows have no skew estimate
    for line in rows.lines().skip(1).filter(|l| l.starts_with("two-way")) {
        assert_eq!(line.split(',').nth(5).unwrap(), "nan");
    }
    // reruns are byte-identical
    let out2 = tmp.path().join("out2");
    run(&["sweep", cfg.to_str().unwrap(), "-o", out2.to_str().unwrap()]);
    assert_eq!(rows, read(&out2.join("sweep_rows.csv")));
}

#[test]
fn sweep_with_empty_axis_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &SWEEP_CONFIG.replace("si = [10.0, 1.0]", "si = []"));
    let out = run(&["sweep", cfg.to_str().unwrap(), "-o", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

const BENCH_CONFIG: &str = r#"
scheme = "proposed"
si = 1.0
seed = 11

[delay]
kind = "gaussian"
mean = 333.56e-9
sigma = 1e-9

[bench]
runs = 3000
n_messages = 60
estimators = ["mle", "cr", "rls", "gmlle"]
"#;

#[test]
fn bench_emits_curves_tracking_bounds() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), BENCH_CONFIG);
    let out_dir = tmp.path().join("out");
    let out = run(&["bench", cfg.to_str().unwrap(), "-o", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&out_dir.join("mse_vs_k.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "estimator,k,mse,bound,seed,config_hash");
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    let count = |name: &str| rows.iter().filter(|r| r[0] == name).count();
    // one-way estimators yield a point per message from the second on; the
    // two-way estimator one per exchange from the second on
    assert_eq!(count("mle"), 59);
    assert_eq!(count("cr"), 59);
    assert_eq!(count("rls"), 59);
    assert_eq!(count("gmlle"), 29);
    // the joint estimator tracks its Cramer-Rao bound once past the first
    // few messages
    for r in rows.iter().filter(|r| r[0] == "mle") {
        let k: u32 = r[1].parse().unwrap();
        if k >= 10 {
            let mse: f64 = r[2].parse().unwrap();
            let bound: f64 = r[3].parse().unwrap();
            assert!(
                (mse / bound - 1.0).abs() < 0.1,
                "k={k}: mse {mse:e} vs bound {bound:e}"
            );
        }
    }
}
