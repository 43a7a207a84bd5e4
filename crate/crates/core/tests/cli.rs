use std::path::Path;
use std::process::{Command, Output};

fn udup(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_udup"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn udup")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = udup(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", stderr(&out));
}

/// Ground truth, noisy corpus and an NM model in a fresh directory.
fn pipeline() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["groundtruth", "--length", "10", "--out", "gt.txt"]);
    ok(d, &["synth", "--gt", "gt.txt", "--per", "0.5", "--out", "c.jsonl"]);
    ok(
        d,
        &["train", "--model", "nm", "--corpus", "c.jsonl", "--dim", "8", "--epochs", "1", "--out", "m.json"],
    );
    dir
}

/// Blanks step 2 of every trace.
fn blank_step(src: &Path, dst: &Path) {
    let text = std::fs::read_to_string(src).unwrap();
    let mut lines = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut steps: Vec<serde_json::Value> = serde_json::from_str(line).unwrap();
        steps[2] = serde_json::Value::Null;
        lines.push(serde_json::to_string(&steps).unwrap());
    }
    std::fs::write(dst, lines.join("\n") + "\n").unwrap();
}

#[test]
fn pipeline_writes_outputs_and_manifests() {
    let dir = pipeline();
    let d = dir.path();
    for f in ["gt.txt", "c.jsonl", "c.jsonl.alignment.jsonl", "m.json", "m.json.manifest.json"] {
        assert!(d.join(f).exists(), "missing {f}");
    }
    let alignment = std::fs::read_to_string(d.join("c.jsonl.alignment.jsonl")).unwrap();
    let corpus = std::fs::read_to_string(d.join("c.jsonl")).unwrap();
    assert_eq!(alignment.lines().count(), corpus.lines().count());
}

#[test]
fn recognize_fills_missing_steps() {
    let dir = pipeline();
    let d = dir.path();
    blank_step(&d.join("c.jsonl"), &d.join("q.jsonl"));
    ok(
        d,
        &["recognize", "--model", "m.json", "--corpus", "q.jsonl", "--topk", "2", "--out", "r.jsonl"],
    );
    let out = std::fs::read_to_string(d.join("r.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 54);
    for row in &rows {
        assert_eq!(row["filled"].as_object().unwrap().len(), 1);
        let recs = row["recommendations"].as_object().unwrap();
        let list = recs.values().next().unwrap().as_array().unwrap();
        assert_eq!(list.len(), 2);
    }
}

#[test]
fn recognize_without_missing_steps_fails() {
    let dir = pipeline();
    let out = udup(dir.path(), &["recognize", "--model", "m.json", "--corpus", "c.jsonl", "--out", "r.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nothing to recognize"));
}

#[test]
fn perception_errors_need_a_distractor() {
    let dir = pipeline();
    let out = udup(dir.path(), &["synth", "--gt", "gt.txt", "--k", "1", "--per", "0.5", "--out", "d.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no distractor to swap"));
}

#[test]
fn invalid_arguments_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases: [&[&str]; 4] = [
        &["recognize", "--model", "m.json", "--corpus", "c.jsonl", "--topk", "0", "--out", "r"],
        &["eval", "grid", "--folds", "1"],
        &["synth", "--gt", "gt.txt", "--per", "1.5", "--out", "c"],
        &["train", "--model", "bogus", "--corpus", "c", "--out", "m"],
    ];
    for args in cases {
        let out = udup(d, args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = udup(dir.path(), &["inspect", "model", "absent.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn inspect_reports_model_shape() {
    let dir = pipeline();
    let out = udup(dir.path(), &["inspect", "model", "m.json"]);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["dim"], 8);
}
