//! End-to-end runs of the `mssv` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn mssv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mssv")).args(args).env_remove("MSSV_WORKERS").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn table1() -> String {
    repo_config("table1.conf").to_string_lossy().into_owned()
}

#[test]
fn price_lists_every_configured_payoff() {
    let o = mssv(&["price", &table1(), "--paths", "2000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("payoff asian_call"));
    assert!(out.contains("payoff up_and_out_call"));
    assert_eq!(out.matches("corrected").count(), 2);
    assert!(!out.contains("full_model  mean"));
}

#[test]
fn price_is_byte_stable() {
    let a = mssv(&["price", &table1(), "--paths", "1000", "--seed", "7"]);
    let b = mssv(&["price", &table1(), "--paths", "1000", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = mssv(&["price", &table1(), "--paths", "1000", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn worker_count_does_not_change_output() {
    let one = mssv(&["--workers", "1", "price", &table1(), "--paths", "3000"]);
    let many = mssv(&["--workers", "7", "price", &table1(), "--paths", "3000"]);
    assert_eq!(one.stdout, many.stdout);
    let env = Command::new(env!("CARGO_BIN_EXE_mssv"))
        .args(["price", &table1(), "--paths", "3000"])
        .env("MSSV_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(0));
    assert_eq!(env.stdout, one.stdout);
}

#[test]
fn values_carry_seventeen_significant_digits() {
    let o = mssv(&["price", &table1(), "--paths", "500", "--payoff", "asian_call"]);
    let line = stdout(&o).lines().find(|l| l.trim_start().starts_with("zero_order")).unwrap().to_string();
    let mean = line.split_whitespace().nth(2).unwrap();
    let mantissa = mean.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{mean}");
}

#[test]
fn unknown_payoff_is_a_usage_error() {
    let o = mssv(&["price", &table1(), "--payoff", "asian_put"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("asian_put"));
    for name in ["asian_call", "up_and_out_call", "european_call", "european_put", "forward", "constant"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn payoff_flag_selects_and_adds() {
    let o = mssv(&["price", &table1(), "--paths", "500", "--payoff", "forward", "--payoff", "up_and_out_call"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("payoff forward"));
    assert!(out.contains("payoff up_and_out_call"));
    assert!(!out.contains("payoff asian_call"));
}

#[test]
fn price_writes_csv_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("prices.csv");
    let diag = dir.path().join("weights.csv");
    let o = mssv(&[
        "price",
        &table1(),
        "--paths",
        "20",
        "--out",
        csv.to_str().unwrap(),
        "--diagnostics",
        diag.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let prices = std::fs::read_to_string(&csv).unwrap();
    assert!(prices.starts_with("payoff,estimator,mean,stderr,ci95_low,ci95_high,n_paths\n"));
    assert_eq!(prices.lines().count(), 5);
    let weights = std::fs::read_to_string(&diag).unwrap();
    assert_eq!(weights.lines().next().unwrap(), "path_index,j,pi_delta,pi_3,pi_sigma,pi_vanna,pi_h");
    assert_eq!(weights.lines().count(), 1 + 20 * 100);
}

#[test]
fn price_with_full_model_adds_a_row() {
    let o = mssv(&["price", &table1(), "--paths", "200", "--full-model", "--payoff", "asian_call"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("full_model  mean"));
}

#[test]
fn convergence_expands_checkpoints() {
    let o = mssv(&["convergence", &table1(), "--paths", "1e5", "--checkpoints", "1e3:1e5:x10", "--payoff", "asian_call"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "N,zero_mean,zero_stderr,corr_mean,corr_stderr");
    let ns: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ns, ["1000", "10000", "100000"]);
}

#[test]
fn convergence_with_full_model_has_seven_columns() {
    let o = mssv(&["convergence", &table1(), "--paths", "300", "--checkpoints", "10:300:x3", "--full-model", "--payoff", "asian_call"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().next().unwrap(), "N,zero_mean,zero_stderr,corr_mean,corr_stderr,full_mean,full_stderr");
    assert!(out.lines().skip(1).all(|l| l.split(',').count() == 7));
}

#[test]
fn convergence_rejects_bad_checkpoints() {
    let too_many = mssv(&["convergence", &table1(), "--paths", "100", "--checkpoints", "10:1000:x10"]);
    assert_eq!(too_many.status.code(), Some(2));
    let malformed = mssv(&["convergence", &table1(), "--checkpoints", "ten:100:x10"]);
    assert_eq!(malformed.status.code(), Some(2));
}

#[test]
fn greeks_on_a_single_date() {
    let o = mssv(&["greeks", repo_config("european.conf").to_str().unwrap(), "--paths", "20000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    for g in ["D1,", "D2,", "dSigma,", "D1dSigma,"] {
        assert!(out.contains(&format!("  {g}")), "{out}");
    }
}

#[test]
fn greeks_reject_multi_date_grids() {
    let o = mssv(&["greeks", &table1(), "--paths", "100"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("single-date"));
}

#[test]
fn full_model_command_warns_on_coarse_steps() {
    let o = mssv(&["full-model", &table1(), "--paths", "50", "--substeps", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("full_model  mean"));
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "[group]\nr = 0.02\n[grid]\nn = 2\nmaturity = 1\n[payoff]\npayoff = forward\nstrike = 1\n[run]\ns0 = 1\nn_paths = 1\nseed = 1\n").unwrap();
    let o = mssv(&["price", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sigma_bar required"));
    assert_eq!(mssv(&["price", "/nonexistent.conf"]).status.code(), Some(2));
    assert_eq!(mssv(&["bogus"]).status.code(), Some(2));
}

#[test]
fn full_model_requires_its_section() {
    let o = mssv(&["full-model", repo_config("european.conf").to_str().unwrap(), "--paths", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oversized_batch_is_a_runtime_error() {
    let o = mssv(&["price", &table1(), "--paths", "1e9"]);
    assert_eq!(o.status.code(), Some(1));
}
