use std::path::Path;
use std::process::{Command, Output};

use highway_marl::harness::{parse_metrics, parse_trace, Progress};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_highway-marl"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn train_small(dir: &Path, steps: &str) {
    ok(&[
        "train",
        "--density",
        "D1",
        "--seed",
        "7",
        "--total-steps",
        steps,
        "--set",
        "eval_every=5",
        "--set",
        "final_eval_episodes=2",
        "--output",
        dir.to_str().unwrap(),
    ]);
}

#[test]
fn train_writes_a_complete_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    train_small(tmp.path(), "600");
    let seed_dir = tmp.path().join("seed_7");
    for f in ["metrics.csv", "best.ckpt", "last.ckpt", "last.adam", "progress.txt", "summary.txt"] {
        assert!(seed_dir.join(f).exists(), "missing {f}");
    }
    let cfg = std::fs::read_to_string(tmp.path().join("config.txt")).unwrap();
    assert!(cfg.contains("density_mode = D1"));
    assert!(cfg.contains("total_steps = 600"));
    let rows = parse_metrics(&std::fs::read_to_string(seed_dir.join("metrics.csv")).unwrap()).unwrap();
    assert!(!rows.is_empty());
    assert_eq!(rows.last().unwrap().step, 600);
}

#[test]
fn resume_continues_step_numbering() {
    let tmp = tempfile::tempdir().unwrap();
    train_small(tmp.path(), "400");
    let dir = tmp.path().to_str().unwrap();
    ok(&[
        "train",
        "--config",
        tmp.path().join("config.txt").to_str().unwrap(),
        "--total-steps",
        "800",
        "--seed",
        "7",
        "--output",
        dir,
        "--resume",
    ]);
    let seed_dir = tmp.path().join("seed_7");
    let rows = parse_metrics(&std::fs::read_to_string(seed_dir.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows.last().unwrap().step, 800);
    assert!(rows.iter().any(|r| r.step <= 400));
    let p = Progress::parse_text(&std::fs::read_to_string(seed_dir.join("progress.txt")).unwrap()).unwrap();
    assert_eq!(p.steps, 800);
}

#[test]
fn rerun_without_resume_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    train_small(tmp.path(), "200");
    let out = run(&["train", "--seed", "7", "--total-steps", "200", "--output", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--resume"));
}

#[test]
fn resume_with_other_trunk_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    train_small(tmp.path(), "200");
    let out = run(&[
        "train",
        "--seed",
        "7",
        "--total-steps",
        "400",
        "--set",
        "trunk=separate",
        "--resume",
        "--output",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("trunk=shared") && err.contains("trunk=separate"), "{err}");
}

#[test]
fn missing_config_file_fails_cleanly() {
    let out = run(&["train", "--config", "/definitely/not/here.txt"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read config file"));
}

#[test]
fn evaluate_is_reproducible_and_saved() {
    let tmp = tempfile::tempdir().unwrap();
    train_small(tmp.path(), "200");
    let ckpt = tmp.path().join("seed_7").join("last.ckpt");
    let out_file = tmp.path().join("eval.csv");
    let args = [
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--density",
        "D1",
        "--episodes",
        "3",
        "--seed",
        "11",
        "--out",
        out_file.to_str().unwrap(),
    ];
    let a = ok(&args);
    let b = ok(&args);
    assert_eq!(a, b);
    let rows = parse_metrics(&std::fs::read_to_string(&out_file).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].step, 200);
}

#[test]
fn evaluate_unknown_checkpoint_fails() {
    let out = run(&["evaluate", "--checkpoint", "/nope.ckpt"]);
    assert!(!out.status.success());
}

#[test]
fn evaluate_architecture_mismatch_fails() {
    let tmp = tempfile::tempdir().unwrap();
    train_small(tmp.path(), "100");
    let ckpt = tmp.path().join("seed_7").join("last.ckpt");
    let out = run(&[
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--set",
        "n_obs=7",
        "--out",
        tmp.path().join("e.csv").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}

#[test]
fn rollout_trace_has_one_record_per_step() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = tmp.path().join("trace.jsonl");
    ok(&[
        "rollout",
        "--baseline",
        "idle",
        "--density",
        "D1",
        "--seed",
        "4",
        "--steps",
        "40",
        "--out",
        trace.to_str().unwrap(),
    ]);
    let records = parse_trace(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert!(!records.is_empty() && records.len() <= 40);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r.step, i as u64 + 1);
    }
    if records.len() < 40 {
        assert!(records.last().unwrap().done);
    }
}

#[test]
fn ablation_writes_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&[
        "ablation",
        "--axis",
        "politeness",
        "--total-steps",
        "200",
        "--seed",
        "1",
        "--set",
        "final_eval_episodes=1",
        "--output",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.starts_with("arm,seeds,final_return_mean"));
    let table = std::fs::read_to_string(tmp.path().join("politeness").join("comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.contains("politeness_0") && table.contains("politeness_1"));
}

#[test]
fn bad_axis_is_rejected() {
    assert!(!run(&["ablation", "--axis", "colour"]).status.success());
}
