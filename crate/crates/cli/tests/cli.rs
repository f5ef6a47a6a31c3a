//! Command-line behaviour of the `ceds-mc` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ceds_core::eqcheck::DecisionPipeline;
use ceds_core::explorer::replay_trace;
use ceds_core::multistate::Representation;
use ceds_core::solverbridge::BackendConfig;

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn mc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ceds-mc")).args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("JSON report on stdout")
}

fn run_corpus(name: &str, extra: &[&str]) -> Output {
    let path = corpus(name);
    let mut args = vec![path.to_str().unwrap(), "--backend", "enum"];
    args.extend_from_slice(extra);
    mc(&args)
}

#[test]
fn safe_program_exits_zero_with_documented_keys() {
    let out = run_corpus("worked_example.cir", &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    let keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).collect();
    let mut expect = vec![
        "program",
        "store",
        "cache",
        "backend",
        "verdict",
        "equal_checks",
        "syntactic_equal",
        "cache_hits",
        "solver_calls",
        "emptiness_checks",
        "states_generated",
        "states_stored",
        "states_deduplicated",
        "wall_time_ms",
        "cache_stats",
    ];
    let mut got = keys.clone();
    got.sort_unstable();
    expect.sort_unstable();
    assert_eq!(got, expect);
    assert_eq!(r["verdict"], "safe");
    assert_eq!(r["store"], "partial");
    assert_eq!(r["cache"], "on");
    assert_eq!(r["backend"], "enum");
}

#[test]
fn assertion_failure_exits_one_with_replayable_trace() {
    let out = run_corpus("overflow_branch.cir", &["--store", "smt"]);
    assert_eq!(out.status.code(), Some(1));
    let r = json(&out);
    assert_eq!(r["verdict"], "assert_fail");
    let trace: Vec<(usize, usize)> = serde_json::from_value(r["trace"].clone()).unwrap();
    assert!(!trace.is_empty());

    let src = std::fs::read_to_string(corpus("overflow_branch.cir")).unwrap();
    let program = ceds_core::parse_program(&src).unwrap();
    let mut pl = DecisionPipeline::new(&BackendConfig::enumeration(), false, true);
    let end = replay_trace(&program, Representation::Monolithic, &trace, &mut pl).unwrap();
    assert!(end.is_some_and(|s| s.error));
}

#[test]
fn state_cap_exits_two() {
    let out = run_corpus("call_then_loop_mod3.cir", &["--max-states", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["verdict"], "exhausted");
}

#[test]
fn usage_errors_exit_three() {
    let missing = mc(&["/no/such/file.cir"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("Usage"));

    assert_eq!(mc(&[]).status.code(), Some(3));
    assert_eq!(run_corpus("calls.cir", &["--store", "nope"]).status.code(), Some(3));
    assert_eq!(run_corpus("calls.cir", &["--max-states", "0"]).status.code(), Some(3));
    assert_eq!(mc(&["--all-configs", "x.cir"]).status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cir");
    std::fs::write(&bad, "fn main() { x = 1; }").unwrap();
    let out = mc(&[bad.to_str().unwrap(), "--backend", "enum"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("undeclared"));
}

#[test]
fn help_exits_zero() {
    let out = mc(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--store"));
}

#[test]
fn unusable_solver_exits_four() {
    let path = corpus("worked_example.cir");
    let out = mc(&[path.to_str().unwrap(), "--backend", "smtlib", "--solver", "/no/such/solver"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn text_format_is_a_table() {
    let out = run_corpus("calls.cir", &["--format", "text"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert!(lines[0].contains("verdict") && lines[0].contains("solver_calls"));
    assert!(lines[1].contains("safe"));
}

#[test]
fn bench_mode_reports_every_program() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["calls.cir", "immediate_fail.cir"] {
        std::fs::copy(corpus(name), dir.path().join(name)).unwrap();
    }
    let out = mc(&["--bench", dir.path().to_str().unwrap(), "--all-configs", "--backend", "enum"]);
    assert_eq!(out.status.code(), Some(0));
    let reports: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(reports.len(), 8);
    assert!(String::from_utf8_lossy(&out.stderr).contains("immediate_fail.cir"));
}
