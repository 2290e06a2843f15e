use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skewtorus"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str], scenario: &Path, out: Option<&Path>) -> Output {
    let mut cmd = bin();
    cmd.args(args).arg("--scenario").arg(scenario);
    if let Some(dir) = out {
        cmd.arg("--out").arg(dir);
    }
    cmd.output().expect("spawning the binary")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn write_scenario(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn check_flags_non_ergodic_generator() {
    let o = run(&["check"], &scenario("identity_check.json"), None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["command"], "check");
    assert_eq!(v["status"], "ok");
    assert_eq!(v["result"]["a1"]["ergodic"], false);
    assert_eq!(v["result"]["a2"]["ergodic"], true);
}

#[test]
fn check_cat_pair() {
    let o = run(&["check"], &scenario("cat_check.json"), None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["result"]["commuting"], true);
    assert_eq!(v["result"]["a1"]["ergodic"], true);
    assert!(v["result"]["higher_rank"].is_object());
}

#[test]
fn malformed_matrix_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_scenario(
        dir.path(),
        "bad.json",
        r#"{"name": "bad", "dims": {"d": 2, "s": 1}, "a1": [[2, 1], [1, 1]], "a2": [[1, 2, 3], [1, 1]]}"#,
    );
    let o = run(&["check"], &p, None);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("a2"), "{err}");
}

#[test]
fn missing_scenario_file_is_a_validation_error() {
    let o = run(&["check"], Path::new("/nonexistent/scenario.json"), None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_zero_data() {
    let dir = tempfile::tempdir().unwrap();
    let zero = r#"{"base_dim": 2, "fiber_dim": 1, "target_dim": 1, "records": []}"#;
    let body = format!(
        r#"{{"name": "zero", "dims": {{"d": 2, "s": 1}}, "a1": [[2, 1], [1, 1]], "a2": [[-3, -2], [-2, -1]],
            "solve": {{"kind": "untwisted", "data": {{"explicit": {{"r": {zero}, "s": {zero}}}}}}}}}"#
    );
    let p = write_scenario(dir.path(), "zero.json", &body);
    let o = run(&["solve"], &p, Some(dir.path()));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let omega: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("omega.json")).unwrap()).unwrap();
    assert_eq!(omega["records"].as_array().unwrap().len(), 0);
}

#[test]
fn solve_manufactured_untwisted() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve"], &scenario("solve_untwisted.json"), Some(dir.path()));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report_solve.json")).unwrap()).unwrap();
    assert!(v["result"]["recovery_error"].as_f64().unwrap() < 1e-10);
    assert!(v["result"]["residual_a"].as_f64().unwrap() < 1e-10);
    assert!(dir.path().join("omega.json").exists());
}

#[test]
fn solve_rejects_non_cocycle() {
    let dir = tempfile::tempdir().unwrap();
    let r = r#"{"base_dim": 2, "fiber_dim": 1, "target_dim": 1, "records": [[1, 0, 0, 0.5, 0.0]]}"#;
    let s = r#"{"base_dim": 2, "fiber_dim": 1, "target_dim": 1, "records": [[0, 1, 0, 0.5, 0.0]]}"#;
    let body = format!(
        r#"{{"name": "bad-cocycle", "dims": {{"d": 2, "s": 1}}, "a1": [[2, 1], [1, 1]], "a2": [[-3, -2], [-2, -1]],
            "solve": {{"kind": "untwisted", "data": {{"explicit": {{"r": {r}, "s": {s}}}}}}}}}"#
    );
    let p = write_scenario(dir.path(), "bad.json", &body);
    let o = run(&["solve"], &p, Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report_solve.json")).unwrap()).unwrap();
    assert_eq!(v["status"], "error");
    assert!(v["result"]["message"].as_str().unwrap().contains("cocycle"));
}

#[test]
fn unperturbed_run_converges_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run"], &scenario("kam_zero.json"), Some(dir.path()));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report_run.json")).unwrap()).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["result"]["status"], "converged");
    let csv = fs::read_to_string(dir.path().join("iterations.csv")).unwrap();
    assert!(csv.starts_with("iteration,cutoff,eps0,eps1,delta1,commutation_defect,split_error,average_term,budget"));
    assert!(dir.path().join("conjugacy.json").exists());
}

#[test]
fn oversized_perturbation_fails_in_setup() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run"], &scenario("kam_too_large.json"), Some(dir.path()));
    assert_eq!(o.status.code(), Some(3));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report_run.json")).unwrap()).unwrap();
    assert_eq!(v["status"], "error");
    assert_eq!(v["result"]["stage"], "setup");
}

#[test]
fn reports_carry_scenario_hash_and_are_summarized() {
    use sha2::{Digest, Sha256};
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("cat_check.json");
    let o = run(&["check"], &path, Some(dir.path()));
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report_check.json")).unwrap()).unwrap();
    let digest: String = Sha256::digest(fs::read(&path).unwrap()).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(v["scenario_sha256"], digest.as_str());

    let o = run(&["report"], &path, Some(dir.path()));
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("report_check.json: check"), "{text}");
    assert!(!text.contains("hash differs"), "{text}");

    let o = run(&["report"], &scenario("identity_check.json"), Some(dir.path()));
    assert!(String::from_utf8_lossy(&o.stdout).contains("hash differs"));
}
