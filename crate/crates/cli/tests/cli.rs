use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sbfe")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("SBFE_BUDGET")
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid json")
}

fn write_instance(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn eval_coin_instance() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_instance(dir.path(), "coin.json", r#"{"k":1,"p":[0.5,0.5]}"#);
    let v = json_of(&run(&["eval", "--instance", path.to_str().unwrap(), "--order", "1,2"]));
    assert_eq!(v["schema_version"], 1);
    assert!((v["result"]["expected"].as_f64().unwrap() - 1.5).abs() < 1e-12);
}

#[test]
fn eval_reports_original_indices() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_instance(dir.path(), "i.json", r#"{"k":2,"p":[0.9,0.1,0.5],"c":[1,2,3]}"#);
    let v = json_of(&run(&["eval", "--instance", path.to_str().unwrap(), "--order", "3,1,2"]));
    assert_eq!(v["config"]["order"], serde_json::json!([3, 1, 2]));
}

#[test]
fn gap_matches_limit() {
    let v = json_of(&run(&["gap", "--t-list", "1", "--m", "20000", "--eps", "1e-6"]));
    let rec = &v["result"]["records"][0];
    let ratio = rec["ratio"].as_f64().unwrap();
    assert!((ratio - 1.5).abs() < 1e-3, "{ratio}");
}

#[test]
fn gap_csv_has_header() {
    let out = run(&["gap", "--t-list", "1,2", "--m", "50", "--eps", "1e-6", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,m,eps,e_adaptive,e_nonadaptive,ratio,limit"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn ptas_within_factor_of_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_instance(
        dir.path(),
        "six.json",
        r#"{"k":3,"p":[0.1,0.9,0.3,0.6,0.5,0.2]}"#,
    );
    let p = path.to_str().unwrap();
    let brute = json_of(&run(&["opt-na", "--instance", p, "--method", "brute"]));
    let approx = json_of(&run(&["opt-na", "--instance", p, "--method", "ptas", "--eps", "0.5"]));
    let b = brute["result"]["expected_cost"].as_f64().unwrap();
    let a = approx["result"]["expected_cost"].as_f64().unwrap();
    assert!(a <= 1.5 * b + 1e-9, "{a} vs {b}");
    assert_eq!(approx["config"]["eps_int"], "1/112");
}

#[test]
fn guided_mode_certifies() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_instance(
        dir.path(),
        "eight.json",
        r#"{"k":4,"p":[0.1,0.9,0.3,0.6,0.5,0.2,0.7,0.4]}"#,
    );
    let v = json_of(&run(&[
        "opt-na",
        "--instance",
        path.to_str().unwrap(),
        "--method",
        "ptas-guided",
        "--eps-int",
        "1/2",
    ]));
    assert_eq!(v["result"]["chain"]["all_certified"], true);
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_instance(dir.path(), "i.json", r#"{"k":2,"p":[0.3,0.6,0.5,0.2]}"#);
    let p = path.to_str().unwrap();
    let args = ["eval", "--instance", p, "--trials", "5000", "--seed", "7"];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    let args = ["opt-na", "--instance", p, "--method", "ptas", "--eps-int", "1/3"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

#[test]
fn validation_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_instance(dir.path(), "bad.json", r#"{"k":5,"p":[0.5,0.5]}"#);
    assert_eq!(run(&["eval", "--instance", bad.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["eval", "--instance", missing.to_str().unwrap()]).status.code(), Some(2));
    let good = write_instance(dir.path(), "good.json", r#"{"k":1,"p":[0.5,0.5]}"#);
    let out = run(&["eval", "--instance", good.to_str().unwrap(), "--order", "1,1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(&["dominate", "--v", "0", "--vstar", "1"]).status.code(), Some(2));
}

#[test]
fn budget_exceeded_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_instance(dir.path(), "six.json", r#"{"k":3,"p":[0.1,0.9,0.3,0.6,0.5,0.2]}"#);
    let p = path.to_str().unwrap();
    let out = run(&["opt-na", "--instance", p, "--method", "ptas", "--budget", "10"]);
    assert_eq!(out.status.code(), Some(3));
    let out = Command::new(bin())
        .args(["opt-na", "--instance", p, "--method", "ptas"])
        .env("SBFE_BUDGET", "10")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn dominate_reports_both_sides() {
    let v = json_of(&run(&["dominate", "--v", "1,2", "--vstar", "1,2"]));
    assert_eq!(v["result"]["dominates"], true);
    let v = json_of(&run(&["dominate", "--v", "1,3", "--vstar", "2,3"]));
    assert_eq!(v["result"]["left"], true);
    assert_eq!(v["result"]["dominates"], false);
}
