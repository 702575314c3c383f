mod common;

use std::path::Path;

use common::*;
use kgflow::cli::{run_cli, EXIT_CONFIG, EXIT_EXEC, EXIT_OK, EXIT_VERIFY, LEARN_LOG, PLAN_FILE, THINK_LOG};

struct Outcome {
    code: i32,
    out: String,
    err: String,
}

fn cli(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["kgflow"];
    argv.extend_from_slice(args);
    let code = run_cli(argv, &mut out, &mut err);
    Outcome {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_script(dir: &Path, completions: &[String]) -> String {
    let p = dir.join("script.json");
    std::fs::write(&p, serde_json::to_string(completions).unwrap()).unwrap();
    format!("scripted:{}", p.display())
}

#[test]
fn verify_exit_codes() {
    let ok = cli(&["verify", s(&fixture("plans/trachea_chest_xr.json"))]);
    assert_eq!(ok.code, EXIT_OK, "{}", ok.err);
    assert_eq!(ok.out.trim_end().lines().last(), Some("Checks passed: True"));

    let bad = cli(&["verify", s(&fixture("plans/error_reserved_as_agent.json"))]);
    assert_eq!(bad.code, EXIT_VERIFY);
    assert!(bad.out.contains("E_RESERVED_AS_AGENT"));
    assert_eq!(bad.out.trim_end().lines().last(), Some("Checks passed: False"));

    let json = cli(&["verify", "--json", s(&fixture("plans/error_native_list_target_shape.yaml"))]);
    assert_eq!(json.code, EXIT_VERIFY);
    let v: serde_json::Value = serde_json::from_str(&json.out).unwrap();
    assert!(v.as_array().unwrap().iter().any(|d| d["code"] == "E_PARAM_FORMAT"), "{v}");
}

#[test]
fn verify_parse_failure_is_exec_failure() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.json");
    std::fs::write(&p, "{\"chunks\": ").unwrap();
    let r = cli(&["verify", s(&p)]);
    assert_eq!(r.code, EXIT_EXEC);
    assert!(r.err.contains("broken.json"));
}

#[test]
fn convert_roundtrips_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trachea.yaml");
    let r = cli(&["convert", s(&fixture("plans/trachea_chest_xr.json")), "-o", s(&out)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert_eq!(cli(&["verify", s(&out)]).code, EXIT_OK);
}

#[test]
fn plan_with_scripted_backend() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let backend = format!("scripted:{}", fixture("scripts/converge.json").display());
    let r = cli(&[
        "plan",
        "trachea segmentation for cxr",
        "--backend",
        &backend,
        "--out-dir",
        s(&out_dir),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert_eq!(r.out.trim_end().lines().last(), Some("Checks passed: True"));
    assert!(out_dir.join(PLAN_FILE).is_file());
    let trace_json = out_dir.join("example.trace.json");
    let t = cli(&["trace", s(&trace_json)]);
    assert_eq!(t.code, EXIT_OK);
    assert!(t.out.contains("Attempt 2: VERIFIER failure"));
    assert!(t.out.trim_end().lines().last().unwrap().starts_with("success after 3 attempt(s)"));
}

#[test]
fn plan_exhaustion_and_config_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let backend = format!("scripted:{}", fixture("scripts/exhausted.json").display());
    let r = cli(&["plan", "x", "--backend", &backend, "--out-dir", s(&out_dir)]);
    assert_eq!(r.code, EXIT_EXEC);
    assert!(r.err.contains("exhausted after 5 attempts"));
    assert!(!out_dir.join(PLAN_FILE).exists());

    // Script runs dry before the budget is spent.
    let short = write_script(dir.path(), &["no json here".to_string()]);
    assert_eq!(cli(&["plan", "x", "--backend", &short, "--out-dir", s(&out_dir)]).code, EXIT_CONFIG);
    assert_eq!(cli(&["plan", "x", "--out-dir", s(&out_dir)]).code, EXIT_CONFIG);
    assert_eq!(cli(&["plan", "x", "--backend", "other"]).code, EXIT_CONFIG);

    let cfg = dir.path().join("remote.json");
    std::fs::write(&cfg, r#"{"base_url": "http://127.0.0.1:9", "model": "m", "timeout_seconds": 5}"#).unwrap();
    assert_eq!(cli(&["plan", "x", "--config", s(&cfg), "--out-dir", s(&out_dir)]).code, EXIT_CONFIG);
    assert_eq!(cli(&["no-such-command"]).code, EXIT_CONFIG);
}

#[test]
fn learn_think_and_logs() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), 8, 4, 0.0, 11);
    let plan = dir.path().join("plan.json");
    std::fs::write(&plan, three_target_plan()).unwrap();
    let out_dir = dir.path().join("out");
    let common = ["--bindings", s(&ds.bindings), "--out-dir", s(&out_dir), "--no-timestamps"];

    let think_first = cli(&[&["think", s(&plan)][..], &common].concat());
    assert_eq!(think_first.code, EXIT_EXEC);
    assert!(std::fs::read_to_string(out_dir.join(THINK_LOG)).unwrap().contains("failed:"));

    let learn = cli(&[&["learn", s(&plan)][..], &common].concat());
    assert_eq!(learn.code, EXIT_OK, "{}", learn.err);
    assert_eq!(learn.out.matches("weights: ").count(), 3);
    let log = std::fs::read_to_string(out_dir.join(LEARN_LOG)).unwrap();
    assert!(log.lines().all(|l| l.starts_with("INFO ")));

    let think = cli(&[&["think", s(&plan)][..], &common].concat());
    assert_eq!(think.code, EXIT_OK, "{}", think.err);
    assert!(think.out.contains("mean dice: 1.000000"));
    let log = std::fs::read_to_string(out_dir.join(THINK_LOG)).unwrap();
    assert!(!log.contains("failed:"), "log is truncated per run");
    assert!(log.contains("mean dice: 1.000000"));
}

#[test]
fn unverified_plan_does_not_execute() {
    let dir = tempfile::tempdir().unwrap();
    let r = cli(&[
        "learn",
        s(&fixture("plans/error_reserved_as_agent.json")),
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(r.code, EXIT_VERIFY);
    assert!(!dir.path().join("weights").exists());
}

#[test]
fn run_chains_plan_learn_think() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), 6, 3, 0.0, 3);
    let out_dir = dir.path().join("out");
    let backend = write_script(dir.path(), &[format!("```json\n{}\n```", three_target_plan())]);
    let r = cli(&[
        "run",
        "lungs, heart, and ribs segmentation for cxr",
        "--backend",
        &backend,
        "--bindings",
        s(&ds.bindings),
        "--out-dir",
        s(&out_dir),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(out_dir.join(PLAN_FILE).is_file());
    assert!(out_dir.join(LEARN_LOG).is_file());
    assert!(out_dir.join(THINK_LOG).is_file());
    assert!(r.out.contains("mean dice: 1.000000"));
}

#[test]
fn emit_shell_prints_without_running() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let r = cli(&["run", "a request", "--emit-shell", "--out-dir", s(&out_dir)]);
    assert_eq!(r.code, EXIT_OK);
    let lines: Vec<_> = r.out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("kgflow plan"));
    assert!(lines[1].starts_with("kgflow learn") && lines[1].ends_with(LEARN_LOG));
    assert!(lines[2].starts_with("kgflow think") && lines[2].ends_with(THINK_LOG));
    assert!(!out_dir.exists());
}

#[test]
fn binary_reports_exit_code() {
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_kgflow"))
        .args(["verify", s(&fixture("plans/error_missing_decision_tree.json"))])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_VERIFY));
    assert!(String::from_utf8_lossy(&status.stdout).contains("E_UNKNOWN_AGENT"));
}
