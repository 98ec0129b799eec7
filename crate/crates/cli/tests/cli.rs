use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stereoprobe"))
        .args(args)
        .current_dir(root())
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn last_stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON record in {text}"));
    serde_json::from_str(line).unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

const FIXTURE: &str = "fixture:data/fixtures/fixture_backend.json";

#[test]
fn no_arguments_prints_usage() {
    let out = run(&[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn recall_matches_hand_computed_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("recall.json");
    let out = run(&[
        "recall",
        "--model",
        FIXTURE,
        "--dataset",
        "data/dataset/sample.jsonl",
        "--k",
        "5,10,25,50,100,200",
        "--out",
        out_path.to_str().unwrap(),
        "--plots",
        dir.path().join("figs").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = read_json(&out_path);
    let golden = read_json(&root().join("data/golden/recall_sample.json"));
    assert_eq!(got["kind"], "recall");
    for (key, value) in golden.as_object().unwrap() {
        assert_eq!(&got[key], value, "{key}");
    }
    assert!(dir.path().join("figs/recall_race.svg").exists());
    assert!(!dir.path().join("figs/recall_gender.svg").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("predictions.json");
    let args = [
        "probe",
        "--model",
        FIXTURE,
        "--group",
        "black people",
        "--group",
        "old people",
        "--k",
        "10",
        "--out",
        out_path.to_str().unwrap(),
    ];
    assert!(run(&args).status.success());
    let first = std::fs::read(&out_path).unwrap();
    assert!(run(&args).status.success());
    assert_eq!(first, std::fs::read(&out_path).unwrap());
    let v: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["sets"].as_array().unwrap().len(), 2);
}

#[test]
fn missing_backend_file_is_a_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "probe",
        "--model",
        "fixture:does/not/exist.json",
        "--group",
        "teachers",
        "--out",
        dir.path().join("p.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let rec = last_stderr_json(&out);
    assert_eq!(rec["status"], "error");
    assert_eq!(rec["command"], "probe");
    assert!(rec["kind"].is_string());
    assert!(!dir.path().join("p.json").exists());
}

#[test]
fn unknown_group_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "probe",
        "--model",
        FIXTURE,
        "--group",
        "no such people at all",
        "--out",
        dir.path().join("p.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(last_stderr_json(&out)["status"], "error");
}

#[test]
fn report_renders_without_a_backend() {
    let dir = tempfile::tempdir().unwrap();
    let g = root().join("data/golden");
    let out = run(&[
        "report",
        g.join("recall_fixture.json").to_str().unwrap(),
        g.join("emotions_fixture.json").to_str().unwrap(),
        g.join("rsa_desk.json").to_str().unwrap(),
        g.join("shift_desk.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    for stem in ["recall_fixture_recall_", "emotions_fixture_emotion_", "rsa_desk_rsa_models", "shift_desk_attribute_diff"] {
        assert!(names.iter().any(|n| n.starts_with(stem)), "no {stem}* in {names:?}");
    }
}

#[test]
fn harvest_replay_reports_partial_failure_and_protects_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("d.jsonl");
    let args = [
        "harvest",
        "--engines",
        "yahoo,google,duckduckgo",
        "--group",
        "Black people",
        "--group",
        "Russians",
        "--replay",
        "data/fixtures/engines",
        "--out",
        out_path.to_str().unwrap(),
    ];
    let out = run(&args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = last_stderr_json(&out);
    assert_eq!(rec["status"], "partial");
    assert_eq!(rec["failed_groups"].as_array().unwrap().len(), 2);
    let lines = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(lines.lines().count(), 10);
    assert!(lines.contains(r#""attribute":"athletic","engine":"multiple""#));

    let again = run(&args);
    assert_eq!(again.status.code(), Some(1));
    assert_eq!(std::fs::read_to_string(&out_path).unwrap(), lines);
}

#[test]
fn recall_k_outside_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "recall",
        "--model",
        FIXTURE,
        "--dataset",
        "data/dataset/sample.jsonl",
        "--k",
        "0,201",
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(last_stderr_json(&out)["status"], "error");
}

#[test]
fn desk_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let base = d.join("base/model.json");
    let spec = format!("desk:{}", base.display());
    let out = run(&["desk-init", "--out", base.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), spec);

    let out = run(&[
        "finetune",
        "--model",
        &spec,
        "--corpus",
        "data/corpus/finetune_fixture.jsonl",
        "--fraction",
        "0.5",
        "--seed",
        "7",
        "--out",
        d.join("tuned").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tuned = String::from_utf8_lossy(&out.stdout).trim().to_string();
    let run_art = read_json(&d.join("tuned/finetune.json"));
    assert_eq!(run_art["kind"], "finetune");

    let shift = d.join("shift.json");
    let out = run(&[
        "diff",
        "--before",
        &spec,
        "--after",
        &tuned,
        "--group",
        "police officers",
        "--group",
        "teachers",
        "--group",
        "women",
        "--group",
        "men",
        "--source",
        "fixture-news",
        "--out",
        shift.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&shift);
    assert_eq!(v["kind"], "shift");
    assert_eq!(v["diffs"].as_array().unwrap().len(), 4);
}
