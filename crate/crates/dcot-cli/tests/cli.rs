//! End-to-end behavior of the `dcot` binary: output files, exit codes,
//! fact-backed direct answers, and the report subcommand.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn dcot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcot"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn run_writes_all_report_files_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let output = dcot(&[
        "run",
        "--suite",
        data_path("scripted.suite").to_str().unwrap(),
        "--mode",
        "both",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    for file in ["run.csv", "comparison.txt", "traces.log", "run.config"] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("max step_count"));
    let csv = fs::read_to_string(out.join("run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 24, "header plus 12 tasks × 2 modes");
}

#[test]
fn aborted_rows_flip_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("bad.suite");
    fs::write(
        &suite,
        "task|ok|arith|fine|2+2\ntask|bad|det|broken payload|1,x;2\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let output = dcot(&[
        "run",
        "--suite",
        suite.to_str().unwrap(),
        "--mode",
        "dcot",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    let csv = fs::read_to_string(out.join("run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "flagged row still reported");
}

#[test]
fn structural_suite_errors_exit_two_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("nonsense.suite");
    fs::write(&suite, "task|a|arith|p|1\nthis is not a task\n").unwrap();
    let output = dcot(&[
        "run",
        "--suite",
        suite.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("line 2"), "{stderr}");
}

#[test]
fn facts_enable_direct_answers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let output = dcot(&[
        "run",
        "--suite",
        data_path("default.suite").to_str().unwrap(),
        "--mode",
        "dcot",
        "--facts",
        data_path("facts.tsv").to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let csv = fs::read_to_string(out.join("run.csv")).unwrap();
    // a01 ("what is 2+3") matches a stored fact exactly: no reasoning steps,
    // answer tokens only, and the answer is correct.
    let row = csv
        .lines()
        .find(|l| l.starts_with("a01,"))
        .expect("a01 row present");
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[3], "0", "step_count: {row}");
    assert_eq!(fields[4], "1", "token_count: {row}");
    assert_eq!(fields[5], "true", "correct: {row}");
    let log = fs::read_to_string(out.join("traces.log")).unwrap();
    assert!(log.contains("task=a01"));
}

#[test]
fn report_subcommand_reprints_the_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let first = dcot(&[
        "run",
        "--suite",
        data_path("scripted.suite").to_str().unwrap(),
        "--mode",
        "both",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(first.status.success());
    let report = dcot(&["report", "--in", out.to_str().unwrap()]);
    assert!(report.status.success());
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.contains("seed=9"));
    assert!(text.contains("max token_count"));
    // The re-rendered table equals the stored one.
    let stored = fs::read_to_string(out.join("comparison.txt")).unwrap();
    assert_eq!(text, stored);
}

#[test]
fn set_overrides_reach_the_engine() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let output = dcot(&[
        "run",
        "--suite",
        data_path("scripted.suite").to_str().unwrap(),
        "--mode",
        "dcot",
        "--set",
        "tau_0=0",
        "--set",
        "delta_sum=0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    // tau_0 = 0 with no summarize band keeps everything: 8 steps per task.
    let csv = fs::read_to_string(out.join("run.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[3], "8", "{line}");
    }
    let cfg = fs::read_to_string(out.join("run.config")).unwrap();
    assert!(cfg.contains("tau_0=0\n"));
}

#[test]
fn train_writes_log_and_params() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("train");
    let output = dcot(&[
        "train",
        "--suite",
        data_path("scripted.suite").to_str().unwrap(),
        "--episodes",
        "25",
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let log = fs::read_to_string(out.join("training.log")).unwrap();
    assert_eq!(log.lines().filter(|l| l.starts_with("episode=")).count(), 25);
    assert!(log.contains("final w_adv="));
    let params = fs::read_to_string(out.join("params.txt")).unwrap();
    assert!(params.starts_with("w_adv="));
    // Invalid episode count is a usage error.
    let bad = dcot(&[
        "train",
        "--suite",
        data_path("scripted.suite").to_str().unwrap(),
        "--episodes",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(2));
}
