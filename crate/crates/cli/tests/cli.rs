use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_distillrec");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const TINY: &str = "[env]\nn_users = 10\nsession_len = 5\n[simulate]\nsessions_per_user = 2\n";

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[env]\nn_userz = 3\n");
    let out = run(&["simulate", "--config", cfg.to_str().unwrap()], &dir.path().join("run"));
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--config", "/nonexistent/run.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stages_out_of_order_report_a_missing_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["train-teachers", "gen-distill", "train-student", "evaluate", "bench"] {
        let out = run(&[stage], dir.path());
        assert_eq!(out.status.code(), Some(3), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn simulate_writes_one_event_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let run_dir = dir.path().join("run");
    let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "3"], &run_dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let log = std::fs::read_to_string(run_dir.join("log.jsonl")).unwrap();
    let events: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(events.len(), 10 * 2 * 5);
    for e in &events {
        let fb: Vec<u64> = serde_json::from_value(e["feedback"].clone()).unwrap();
        assert!(fb.windows(2).all(|w| w[1] <= w[0]) && fb.iter().all(|&v| v <= 1));
    }
    let catalog = std::fs::read_to_string(run_dir.join("catalog.jsonl")).unwrap();
    assert!(catalog.lines().count() > 0);
}

#[test]
fn smoke_run_is_reproducible_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = run(&["run-all", "--config", cfg.to_str().unwrap(), "--jobs", "2"], d);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["log.jsonl", "catalog.jsonl", "teachers/teacher_0.json", "distill.jsonl", "student.json", "eval.json", "eval.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }

    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let text = manifest.to_string();
    for stage in ["simulate", "train-teachers", "gen-distill", "train-student", "evaluate", "bench"] {
        assert!(text.contains(stage), "manifest lacks {stage}");
    }

    // unchanged inputs: the stage is skipped and outputs stay put
    let before = std::fs::read(a.join("student.json")).unwrap();
    let out = run(&["train-student", "--config", cfg.to_str().unwrap()], &a);
    assert!(out.status.success());
    assert_eq!(std::fs::read(a.join("student.json")).unwrap(), before);
}
