use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn framex(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_framex"))
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn run(command: &str, input: &str, extra: &[&str]) -> (i32, Value, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let input = fixture(input);
    let mut args = vec![command, "--in", input.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let code = framex(&args);
    let report = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    (code, report, dir)
}

#[test]
fn analyze_orthonormal_basis() {
    let (code, r, _d) = run("analyze", "onb.json", &["--no-timestamp"]);
    assert_eq!(code, 0);
    assert_eq!(r["status"], "ok");
    let rep = &r["result"]["report"];
    assert!((rep["lower"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((rep["upper"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(rep["is_riesz_basis"], true);
    assert!(r.get("wall_time_ms").is_none());
}

#[test]
fn timestamp_present_by_default() {
    let (code, r, _d) = run("analyze", "onb.json", &[]);
    assert_eq!(code, 0);
    assert!(r["wall_time_ms"].is_number());
}

#[test]
fn extract_is_repeatable_and_certified() {
    let (c1, r1, _a) = run("extract", "random_frame.json", &["--seed", "3", "--no-timestamp"]);
    let (c2, r2, _b) = run("extract", "random_frame.json", &["--seed", "3", "--no-timestamp"]);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(r1, r2);
    assert_eq!(r1["seed"], 3);
    let res = &r1["result"]["extraction"];
    assert_eq!(res["mult_ok"], true);
    assert_eq!(res["bounds_ok"], true);
    assert!(res["report"]["lower"].as_f64().unwrap() > 0.0);
}

#[test]
fn extract_modes() {
    for mode in ["subsequence", "coefficients"] {
        let p = format!("mode={mode}");
        let (code, r, _d) = run("extract", "random_frame.json", &["--param", &p, "--no-timestamp"]);
        assert_eq!(code, 0, "{mode}: {r}");
    }
}

#[test]
fn density_of_integers_is_one() {
    let (code, r, _d) = run("density", "z_lattice.json", &["--no-timestamp"]);
    assert_eq!(code, 0);
    let e = &r["result"]["estimate"];
    let (lo, hi) = (e["lower"].as_f64().unwrap(), e["upper"].as_f64().unwrap());
    assert!(lo <= hi);
    assert!((lo - 1.0).abs() <= 0.05 && (hi - 1.0).abs() <= 0.05, "{lo} {hi}");
    let (code, r, _d) = run("density", "z_union.json", &["--no-timestamp"]);
    assert_eq!(code, 0);
    let hi = r["result"]["estimate"]["upper"].as_f64().unwrap();
    assert!((hi - 2.0).abs() <= 0.1, "{hi}");
}

#[test]
fn every_command_runs_on_its_fixture() {
    for (cmd, input) in [
        ("dual", "random_frame.json"),
        ("classify", "random_frame.json"),
        ("sample", "sample.json"),
        ("selector", "sample.json"),
        ("gabor", "gabor_l64.json"),
        ("construct45", "gabor_l64.json"),
    ] {
        let (code, r, _d) = run(cmd, input, &["--no-timestamp"]);
        assert_eq!(code, 0, "{cmd}: {r}");
        assert_eq!(r["command"], cmd);
    }
}

#[test]
fn csv_table_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let (code, _r, _d) = run("analyze", "onb.json", &["--csv", csv.to_str().unwrap()]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("key,value"));
    assert!(text.lines().any(|l| l.starts_with("lower,")));
}

#[test]
fn exit_codes() {
    // unknown parameter: precondition
    let (code, r, _d) = run("analyze", "onb.json", &["--param", "bogus=1"]);
    assert_eq!(code, 2);
    assert_eq!(r["status"], "error");
    assert_eq!(r["error"]["exit_code"], 2);
    // malformed parameter value: parse error
    let (code, _r, _d) = run("sample", "sample.json", &["--param", "epsilon=abc"]);
    assert_eq!(code, 3);
    // replica budget
    let (code, r, _d) = run("sample", "sample.json", &["--param", "replica_budget=1"]);
    assert_eq!(code, 4);
    assert_eq!(r["error"]["kind"], "budget_exceeded");
    // missing input still leaves an error report
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let code = framex(&["analyze", "--in", "/nonexistent.json", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 3);
    let r: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(r["status"], "error");
    // unwritable output
    let input = fixture("onb.json");
    let code = framex(&["analyze", "--in", input.to_str().unwrap(), "--out", "/nonexistent/dir/r.json"]);
    assert_eq!(code, 1);
    // unknown command
    assert_eq!(framex(&["frobnicate", "--in", "x", "--out", "y"]), 2);
}

#[test]
fn malformed_input_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"dim": 2, "field": "real", "vectors": [[1, 0]], "extra": 1}"#).unwrap();
    let out = dir.path().join("r.json");
    let code = framex(&["analyze", "--in", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 3);
    std::fs::write(&bad, r#"{"dim": 2, "field": "real", "vectors": [[1, 0, 0]]}"#).unwrap();
    let code = framex(&["analyze", "--in", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_ne!(code, 0);
}
