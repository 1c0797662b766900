use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sde-lab"));
    cmd.env_remove("SDE_LAB_SEED");
    cmd
}

fn default_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json")
}

fn report(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

#[test]
fn lemma21_unit_parameters_pass() {
    let out = bin()
        .args(["lemma21", "--p", "1", "--kappa", "1", "--eps-max", "1/e", "--eps-count", "8"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["passed"], true);
    assert_eq!(r["checks"][0]["grid_size"], 8);
    assert_eq!(r["checks"][0]["params"]["violations"], 0);
}

#[test]
fn verify_bounds_reports_ratio() {
    let out = bin().args(["verify-bounds", "--trials", "2000", "--radius", "5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let ratio = r["max_lyapunov_ratio"].as_f64().unwrap();
    assert!(ratio > 0.0 && ratio <= 1.0, "{ratio}");
    assert_eq!(r["checks"].as_array().unwrap().len(), 9);
}

fn run_sweep(dir: &Path, threads: &str, seed_flag: Option<&str>) -> Output {
    let mut cmd = bin();
    cmd.arg("sweep")
        .arg("--config")
        .arg(default_config())
        .args(["--n-paths", "300", "--dt", "0.001953125", "--threads", threads, "--output-dir"])
        .arg(dir);
    if let Some(s) = seed_flag {
        cmd.args(["--seed", s]);
    }
    cmd.output().unwrap()
}

#[test]
fn sweep_is_byte_identical_across_runs_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ra = run_sweep(&a, "1", Some("42"));
    let rb = run_sweep(&b, "3", Some("42"));
    assert!(ra.status.code().is_some_and(|c| c <= 1), "{}", String::from_utf8_lossy(&ra.stderr));
    assert_eq!(ra.status.code(), rb.status.code());
    let ca = std::fs::read(a.join("sweep.csv")).unwrap();
    let cb = std::fs::read(b.join("sweep.csv")).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    assert!(text.starts_with("eps,mean,stderr,aborted,lower_bound,upper_bound,local_slope\n"));
    assert_eq!(text.lines().count(), 7);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("sweep.json")).unwrap()).unwrap();
    for key in ["C", "kappa", "kappa_t", "c", "K"] {
        assert!(summary["constants"][key].is_number(), "missing {key}");
    }
}

#[test]
fn seed_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_sweep(&a, "1", Some("7"));
    let mut cmd = bin();
    cmd.env("SDE_LAB_SEED", "7")
        .arg("sweep")
        .arg("--config")
        .arg(default_config())
        .args(["--n-paths", "300", "--dt", "0.001953125", "--output-dir"])
        .arg(&b);
    cmd.output().unwrap();
    assert_eq!(
        std::fs::read(a.join("sweep.csv")).unwrap(),
        std::fs::read(b.join("sweep.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"n": 4, "unknown_key": 1}"#).unwrap();
    let out = bin().arg("sweep").arg("--config").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["sweep", "--dim", "4"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["sweep", "--eps-grid", "0.1,0.2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().arg("sweep").arg("--config").arg(tmp.path().join("missing.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_failure_exits_with_one_and_reports() {
    let out = bin()
        .args(["transform-check", "--paths", "2", "--steps", "256", "--tolerance", "1e-12"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["passed"], false);
    assert!(r["checks"][0]["max_violation"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_writes_paths_and_checks_envelope() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "--eps", "0.05", "--path-index", "3", "--seed", "11", "--output-dir"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(&out);
    assert_eq!(r["checks"][0]["check"], "sandwich");
    let solution = std::fs::read_to_string(tmp.path().join("solution_3.csv")).unwrap();
    assert!(solution.starts_with("t,x1,x2,x3,x4,x5\n"));
    assert_eq!(solution.lines().count(), 2048 + 2);
    let w = std::fs::read_to_string(tmp.path().join("brownian_3.csv")).unwrap();
    assert!(w.starts_with("t,w1\n0,0\n"));
}

#[test]
fn variation_and_stdnorm_commands_pass() {
    let out = bin()
        .args(["variation-check", "--points", "50", "--paths", "3", "--steps", "1024"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let out = bin().args(["stdnorm-check", "--samples", "2000", "--dt", "0.0078125"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}
