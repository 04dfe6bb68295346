//! The `vekg` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use vekg::synth::read_truth;

fn vekg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vekg")).current_dir(dir).args(args).output().expect("binary runs")
}

fn gen(dir: &Path, scenario: &str) {
    let o = vekg(dir, &["gen", scenario, "--out", "s.jsonl", "--truth", "t.jsonl", "--rules", "r.toml", "-q"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_then_run_finds_the_fall() {
    let d = tempfile::tempdir().unwrap();
    gen(d.path(), "fall_positive");
    let o = vekg(d.path(), &["run", "--input", "s.jsonl", "--rules", "r.toml", "--truth", "t.jsonl", "--metrics", "m.jsonl"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().count(), 1);
    assert!(out.contains("\"kind\":\"fall_detection\""));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("f_score=1.0000"), "{stderr}");
    let metrics = std::fs::read_to_string(d.path().join("m.jsonl")).unwrap();
    assert!(metrics.lines().next().unwrap().contains("\"tag_search_ms\""));
    assert!(metrics.lines().last().unwrap().contains("\"accuracy\""));
    assert_eq!(read_truth(&std::fs::read_to_string(d.path().join("t.jsonl")).unwrap()).unwrap().len(), 1);
}

#[test]
fn run_writes_to_out_file_and_reads_stdin() {
    let d = tempfile::tempdir().unwrap();
    gen(d.path(), "jaywalk_positive");
    let stream = std::fs::read(d.path().join("s.jsonl")).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_vekg"))
        .current_dir(d.path())
        .args(["run", "--input", "-", "--rules", "r.toml", "--out", "n.jsonl", "-q"])
        .stdin(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child.stdin.take().unwrap().write_all(&stream).unwrap();
    assert!(child.wait().unwrap().success());
    let notes = std::fs::read_to_string(d.path().join("n.jsonl")).unwrap();
    assert_eq!(notes.lines().count(), 1);
}

#[test]
fn missing_rules_file_is_an_input_error() {
    let d = tempfile::tempdir().unwrap();
    gen(d.path(), "fall_positive");
    let o = vekg(d.path(), &["run", "--input", "s.jsonl", "--rules", "nope.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.toml"));
}

#[test]
fn corrupt_line_reports_location_after_earlier_windows() {
    let d = tempfile::tempdir().unwrap();
    gen(d.path(), "street");
    let text = std::fs::read_to_string(d.path().join("s.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    // Header is line 1, so frame k sits on line k + 2. Break frame 900
    // (t = 30 s), inside the second 20 s window.
    lines[901] = "{\"frame\": 900, \"ts_ms\": ";
    std::fs::write(d.path().join("bad.jsonl"), lines.join("\n")).unwrap();
    let o = vekg(d.path(), &["run", "--input", "bad.jsonl", "--rules", "r.toml", "--window-ms", "20000", "-q"]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("line 902"), "{stderr}");
    // Jaywalker 0 crosses at 2.7-4.3 s, in the first window; its
    // notification is emitted before the failure.
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("\"participants\":[100]"), "{out}");
    assert!(!out.contains("\"participants\":[101]"), "{out}");
}

#[test]
fn same_inputs_same_bytes() {
    let d = tempfile::tempdir().unwrap();
    let o = vekg(d.path(), &["gen", "street", "--out", "s.jsonl", "--rules", "r.toml", "--seed", "5", "--jitter-px", "2", "--dropout", "0.05", "-q"]);
    assert!(o.status.success());
    let a = vekg(d.path(), &["run", "--input", "s.jsonl", "--rules", "r.toml", "-q"]);
    let b = vekg(d.path(), &["run", "--input", "s.jsonl", "--rules", "r.toml", "-q", "--sequential"]);
    assert!(a.status.success() && b.status.success());
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn gen_is_deterministic_by_seed() {
    let d = tempfile::tempdir().unwrap();
    let run = |seed: &str| vekg(d.path(), &["gen", "handshake_positive", "--seed", seed, "--jitter-px", "2", "-q"]).stdout;
    assert_eq!(run("3"), run("3"));
    assert_ne!(run("3"), run("4"));
}

#[test]
fn validate_accepts_generated_streams() {
    let d = tempfile::tempdir().unwrap();
    gen(d.path(), "handshake_positive");
    let o = vekg(d.path(), &["validate", "--input", "s.jsonl"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok"));
}

#[test]
fn validate_rejects_time_going_backwards() {
    let d = tempfile::tempdir().unwrap();
    let f = |i: u64, t: i64| format!("{{\"frame\":{i},\"ts_ms\":{t},\"objects\":[]}}");
    std::fs::write(d.path().join("s.jsonl"), [f(0, 0), f(1, 40), f(2, 40)].join("\n")).unwrap();
    let o = vekg(d.path(), &["validate", "--input", "s.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(vekg(d.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(vekg(d.path(), &["run", "--input", "x"]).status.code(), Some(1));
    gen(d.path(), "fall_positive");
    let o = vekg(d.path(), &["run", "--input", "s.jsonl", "--rules", "r.toml", "--window-ms", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let o = vekg(d.path(), &["run", "--input", "s.jsonl", "--rules", "r.toml", "--out", "s.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gen_unknown_scenario_fails() {
    let d = tempfile::tempdir().unwrap();
    let o = vekg(d.path(), &["gen", "no_such_scene"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_accepts_scenario_files() {
    let d = tempfile::tempdir().unwrap();
    let s = vekg::synth::builtin("parking_positive").unwrap();
    std::fs::write(d.path().join("scene.toml"), s.to_toml()).unwrap();
    let o = vekg(d.path(), &["gen", "scene.toml", "--truth", "t.jsonl", "-q"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let builtin_stream = vekg(d.path(), &["gen", "parking_positive", "-q"]).stdout;
    assert_eq!(o.stdout, builtin_stream);
}

#[test]
fn bench_reports_medians_and_search_comparison() {
    let d = tempfile::tempdir().unwrap();
    let o = vekg(d.path(), &["bench", "street", "--reps", "3", "-q"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["reps"], 3);
    assert_eq!(report["frames"], 1800);
    assert_eq!(report["search_results_identical"], true);
    assert!(report["median_rin"].as_f64().unwrap() >= 0.99);
    assert!(report["search_speedup"].as_f64().unwrap() > 1.0);
}
