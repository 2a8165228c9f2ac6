use std::process::{Command, Output};

fn run(dir: &std::path::Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vulngraph"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

const FUNC: &str = "int f(int a) { int b = a + 1; if (b > 2) { b = b / a; } return b; }";

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["parse"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["explain", "--model", "m", "--file", "f", "--score", "bogus"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["parse", "missing.c"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.c"));
    std::fs::write(dir.path().join("bad.c"), "int f( {").unwrap();
    assert_eq!(run(dir.path(), &["parse", "bad.c"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["predict", "--model", "nope.json", "--file", "bad.c"]).status.code(), Some(1));
}

#[test]
fn parse_and_graph_emit_json_and_dot() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("f.c"), FUNC).unwrap();
    let out = run(dir.path(), &["parse", "f.c"]);
    assert!(out.status.success());
    let ast: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(ast.is_object());

    let out = run(dir.path(), &["parse", "f.c", "--emit", "cfg-dot"]);
    let dot = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(dot.contains("true") && dot.contains("false"), "{dot}");

    let out = run(dir.path(), &["graph", "f.c", "--classes", "cfg,ddg"]);
    let g: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let edges = g["edges"].as_array().unwrap();
    assert!(!edges.is_empty());
    assert!(edges.iter().all(|e| matches!(e["class"].as_str(), Some("CFG" | "DDG"))), "{g}");

    let out = run(dir.path(), &["graph", "f.c", "--emit", "dot"]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("digraph"));
}

#[test]
fn synth_output_is_seeded_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(dir.path(), &["--seed", "5", "synth", "--count", "10"]).stdout;
    let b = run(dir.path(), &["--seed", "5", "synth", "--count", "10"]).stdout;
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 10);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["func"].is_string() && v["target"].is_u64());
    }
}
