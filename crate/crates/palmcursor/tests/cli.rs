use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn palmcursor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_palmcursor")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = palmcursor(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn golden() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/replay/golden.log");
    std::fs::read_to_string(path).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn demo() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("demo");
    ok(&["synth", "--out", s(&root)]);
    (dir, root)
}

#[test]
fn synth_then_replay_reproduces_the_golden_log() {
    let (_dir, root) = demo();
    let log = root.join("commands.log");
    let stdout = ok(&[
        "run",
        "--models", s(&root.join("models")),
        "--references", s(&root.join("references.json")),
        "--replay", s(&root.join("recording")),
        "--dry-run",
        "--log", s(&log),
    ]);
    assert!(stdout.starts_with("50 frames, 21 commands"), "{stdout}");
    assert_eq!(std::fs::read_to_string(log).unwrap().trim_end(), golden().trim_end());
}

#[test]
fn a_config_file_supplies_defaults_and_flags_win() {
    let (_dir, root) = demo();
    let config = root.join("palmcursor.toml");
    let log = root.join("commands.log");
    std::fs::write(
        &config,
        format!(
            "models = {:?}\nreferences = {:?}\nreplay = {:?}\ndry_run = true\nlog = {:?}\nmirror = false\n",
            root.join("models"),
            root.join("references.json"),
            root.join("recording"),
            log,
        ),
    )
    .unwrap();
    ok(&["run", "--config", s(&config)]);
    let unmirrored = std::fs::read_to_string(&log).unwrap();
    assert_ne!(unmirrored.trim_end(), golden().trim_end());
    ok(&["run", "--config", s(&config), "--mirror"]);
    assert_eq!(std::fs::read_to_string(&log).unwrap().trim_end(), golden().trim_end());
}

#[test]
fn calibrate_writes_references_that_eval_reads() {
    let (_dir, root) = demo();
    let refs = root.join("calibrated.json");
    let stdout = ok(&[
        "calibrate",
        "--dataset", s(&root.join("dataset")),
        "--models", s(&root.join("models")),
        "--out", s(&refs),
    ]);
    assert_eq!(stdout.lines().filter(|l| l.contains("threshold")).count(), 4, "{stdout}");
    let parsed: Value = serde_json::from_str(&std::fs::read_to_string(&refs).unwrap()).unwrap();
    assert!(parsed.is_object());

    let report = root.join("report.json");
    let stdout = ok(&[
        "eval",
        "--dataset", s(&root.join("dataset")),
        "--models", s(&root.join("models")),
        "--references", s(&refs),
        "--report", s(&report),
    ]);
    assert!(stdout.contains("Aggregate accuracy"), "{stdout}");
    let parsed: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["classifier"]["accuracy"]["correct"], parsed["classifier"]["accuracy"]["total"]);
    assert!(report.with_extension("txt").exists());
}

#[test]
fn eval_on_an_annotated_recording() {
    let (_dir, root) = demo();
    let report = root.join("replay-report.json");
    ok(&[
        "eval",
        "--replay", s(&root.join("recording")),
        "--models", s(&root.join("models")),
        "--references", s(&root.join("references.json")),
        "--report", s(&report),
    ]);
    let parsed: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(parsed["samples"].as_u64().unwrap() > 0);
}

#[test]
fn record_from_a_recording_copies_frames() {
    let (_dir, root) = demo();
    let out = root.join("copy");
    let stdout = ok(&["record", "--from", s(&root.join("recording")), "--out", s(&out), "--seconds", "0.5"]);
    assert!(stdout.contains("frames written"), "{stdout}");
    assert!(out.join("manifest.json").exists());
    assert!(out.join("frame_000000.png").exists());
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let (_dir, root) = demo();
    let out = palmcursor(&[
        "run",
        "--models", s(&root.join("models")),
        "--references", s(&root.join("references.json")),
        "--camera", "0",
        "--dry-run",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("camera 0"));

    let out = palmcursor(&["run", "--models", s(&root.join("nowhere")), "--references", s(&root.join("references.json")),
        "--replay", s(&root.join("recording")), "--dry-run"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}
