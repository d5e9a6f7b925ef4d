//! End-to-end tests of the command-line interface: exit codes, artifact
//! determinism and fault injection.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_extragrad"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn base_config(gamma: f64) -> String {
    format!(
        r#"{{
  "problem": {{"family": "strongly_monotone_quadratic", "dim": 5, "alpha": 1.0, "lipschitz": 4.0, "matrix_seed": 1}},
  "algorithms": ["peg", "og"],
  "schedule": {{"kind": "constant", "gamma": {gamma}}},
  "noise": {{"kind": "gaussian_iid", "variance": 0.01}},
  "x_start": {{"kind": "near_solution", "scale": 1.0}},
  "t_max": 300,
  "seeds": [0, 1, 2],
  "output_dir": "unused"
}}"#
    )
}

fn run_with_output_dir(config: &Path, out: &Path) -> Output {
    bin()
        .arg("run")
        .arg(config)
        .env("EXTRAGRAD_OUTPUT_DIR", out)
        .output()
        .unwrap()
}

#[test]
fn run_rejects_malformed_config_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    write(&cfg, r#"{"problem": {"family": "strongly_monotone_quadratic"}"#);
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("parse"), "stderr: {err}");
}

#[test]
fn run_rejects_unknown_key_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("unknown.json");
    write(&cfg, &base_config(0.05).replace("\"t_max\"", "\"t_maxx\""));
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_reports_divergence_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("diverge.json");
    // gamma far above 2/L makes the quadratic iteration expand until overflow
    write(&cfg, &base_config(50.0));
    let out = run_with_output_dir(&cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("diverged"), "stderr: {err}");
}

#[test]
fn run_artifacts_are_bit_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    write(&cfg, &base_config(0.05));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_with_output_dir(&cfg, &a).status.success());
    assert!(run_with_output_dir(&cfg, &b).status.success());

    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"peg_seed0.csv".to_string()), "got {names:?}");
    assert!(names.contains(&"peg_mean.csv".to_string()));
    assert!(names.contains(&"og_seed2.csv".to_string()));
    assert!(names.contains(&"summary.json".to_string()));
    for name in &names {
        let fa = std::fs::read(a.join(name)).unwrap();
        let fb = std::fs::read(b.join(name)).unwrap();
        assert_eq!(fa, fb, "artifact {name} differs between invocations");
    }
    let header = std::fs::read_to_string(a.join("peg_seed0.csv")).unwrap();
    assert!(header.starts_with("t,oracle_calls,dist_sq_last,dist_sq_avg_lead,dist_sq_avg_base,err_res\n"));
}

#[test]
fn verify_all_passes_cleanly() {
    let out = bin().args(["verify", "all", "--trials", "2000"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for name in ["three_point", "four_point_a", "four_point_b", "descent_along_run"] {
        assert!(
            stdout.lines().any(|l| l.starts_with(name) && l.contains("violations 0")),
            "missing clean report for {name}: {stdout}"
        );
    }
    assert_eq!(stdout.matches("-> ok").count(), 3, "{stdout}");
}

#[test]
fn verify_detects_injected_corruption() {
    let out = bin()
        .args(["verify", "all", "--trials", "2000", "--corrupt-projection", "0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let three_point_violated = stdout
        .lines()
        .any(|l| l.starts_with("three_point") && !l.contains("violations 0"));
    assert!(three_point_violated, "{stdout}");
}

fn synthetic_csv(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("curve.csv");
    let mut text = String::from("t,value,bad\n");
    for t in 1..=100u64 {
        let v = 5.0 / t as f64;
        let bad = if t == 50 { -1.0 } else { v };
        text.push_str(&format!("{t},{v},{bad}\n"));
    }
    write(&path, &text);
    path
}

#[test]
fn fit_recovers_slope_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synthetic_csv(dir.path());
    let out = bin()
        .arg("fit")
        .arg(&csv)
        .args(["--column", "value", "--scale", "loglog"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("slope -1.000000"), "{stdout}");
}

#[test]
fn fit_rejects_nonpositive_values_with_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synthetic_csv(dir.path());
    let out = bin()
        .arg("fit")
        .arg(&csv)
        .args(["--column", "bad", "--scale", "loglog"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonpositive"));

    // a window that excludes the bad row succeeds
    let out = bin()
        .arg("fit")
        .arg(&csv)
        .args(["--column", "bad", "--scale", "loglog", "--window", "51:100"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn fit_rejects_missing_column_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synthetic_csv(dir.path());
    let out = bin()
        .arg("fit")
        .arg(&csv)
        .args(["--column", "nope", "--scale", "loglog"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no column named nope"));
}
