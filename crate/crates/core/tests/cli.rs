use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use penalized_nls::cli::demos;
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_penalized-nls"))
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, value.to_string()).unwrap();
    path
}

fn demo(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_writes_solution_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "l1.json", &demo(demos::LAMBDA1_1D));
    let out = dir.path().join("out");
    let o = run(&["solve", "--hbar", "0.1"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary_0.1.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], json!(true));
    assert_eq!(summary["certification"]["solves_original"], json!(true));
    let csv = std::fs::read_to_string(out.join("solution_0.1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,u"));
    assert_eq!(lines.count(), 2047);
}

#[test]
fn malformed_json_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = demo(demos::LAMBDA1_1D);
    v["region"]["half_widths"] = json!("wide");
    let cfg = write_config(dir.path(), "bad.json", &v);
    let o = run(&["solve"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("region"), "{}", stderr(&o));

    let cfg = dir.path().join("truncated.json");
    std::fs::write(&cfg, "{\"dimension\": 1, ").unwrap();
    let o = run(&["solve"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn nonpositive_hbar_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "l1.json", &demo(demos::LAMBDA1_1D));
    for h in ["0", "-0.1"] {
        let o = run(&["solve", "--hbar", h], &cfg, &dir.path().join("out"));
        assert_eq!(o.status.code(), Some(2), "ℏ = {h}: {}", stderr(&o));
    }
    let mut v = demo(demos::LAMBDA1_1D);
    v["hbar"] = json!([0.2, 0.0]);
    let cfg = write_config(dir.path(), "zero.json", &v);
    let o = run(&["solve"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hbar[1]"));
}

#[test]
fn empty_hbar_list_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = demo(demos::LAMBDA1_1D);
    v["hbar"] = json!([]);
    let cfg = write_config(dir.path(), "empty.json", &v);
    let o = run(&["sweep"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn non_convergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = demo(demos::LAMBDA1_1D);
    v["solver"] = json!({ "max_outer": 2 });
    let cfg = write_config(dir.path(), "short.json", &v);
    let out = dir.path().join("out");
    let o = run(&["solve", "--hbar", "0.2"], &cfg, &out);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    // The best iterate is still written.
    assert!(out.join("summary_0.2.json").exists());
}

#[test]
fn check_passes_on_demos() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [("l1.json", demos::LAMBDA1_1D), ("l2.json", demos::LAMBDA2_1D)] {
        let cfg = write_config(dir.path(), name, &demo(text));
        let out = dir.path().join(name.replace(".json", ""));
        let o = run(&["check"], &cfg, &out);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stdout));
        let report: Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("conditions.json")).unwrap()).unwrap();
        assert_eq!(report["all_passed"], json!(true));
    }
}

fn failing_condition(v: &Value) -> (Option<i32>, Value) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", v);
    let out = dir.path().join("out");
    let o = run(&["check"], &cfg, &out);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("conditions.json")).unwrap()).unwrap();
    (o.status.code(), report)
}

fn condition<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["conditions"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap()
}

#[test]
fn potential_touching_zero_fails_v() {
    let mut v = demo(demos::LAMBDA1_1D);
    v["potential"] = json!({ "kind": "cosine", "base": 0.0, "amplitude": 0.5, "center": [0.0], "period": 4.0 });
    let (code, report) = failing_condition(&v);
    assert_eq!(code, Some(4));
    let c = condition(&report, "(V)");
    assert_eq!(c["passed"], json!(false));
    assert!(c["counterexample"]["detail"].as_str().unwrap().contains("α"));
}

#[test]
fn unnormalized_gamma_above_one_fails_gamma() {
    let mut v = demo(demos::LAMBDA1_1D);
    v["gamma"] = json!({ "kind": "constant", "value": 1.5 });
    v["normalize_gamma"] = json!(false);
    let (code, report) = failing_condition(&v);
    assert_eq!(code, Some(4));
    assert_eq!(condition(&report, "(Gamma)")["passed"], json!(false));
}

#[test]
fn sweep_and_decay_fit_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "l2.json", &demo(demos::LAMBDA2_1D));
    let out = dir.path().join("out");
    let o = run(&["sweep"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("hbar,level_scaled,Q_scaled,m,argmax_x,V_at_argmax,Gamma_at_argmax"));
    assert_eq!(lines.count(), 4);
    let limit: Value = serde_json::from_str(&std::fs::read_to_string(out.join("limit.json")).unwrap()).unwrap();
    assert!((limit["c_limit"].as_f64().unwrap() - 4.0 / 3.0).abs() < 0.005 * 4.0 / 3.0);

    let o = run(&["solve", "--hbar", "0.2"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0));
    let o = bin()
        .args(["decay-fit", "--hbar", "0.2", "--window", "3,6", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--solution")
        .arg(out.join("solution_0.2.csv"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit: Value = serde_json::from_str(&std::fs::read_to_string(out.join("decay_0.2.json")).unwrap()).unwrap();
    let rate = fit["rate"].as_f64().unwrap();
    assert!((rate - 5.0).abs() < 0.02 * 5.0, "{rate}");
}

#[test]
fn seeded_runs_are_bit_identical_and_thread_count_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = demo(demos::LAMBDA1_1D);
    v["hbar"] = json!([0.4, 0.2]);
    v["solver"] = json!({ "starts": 3 });
    v["sweep"] = json!({ "warm_start": false });
    let cfg = write_config(dir.path(), "l1.json", &v);
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let o = bin()
            .env("PENALIZED_NLS_THREADS", threads)
            .args(["sweep", "--seed", "11", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push(std::fs::read(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);

    let o = bin().env("PENALIZED_NLS_THREADS", "zero").args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve"], &dir.path().join("nope.json"), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
}
