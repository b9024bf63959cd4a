use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cream(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cream")).args(args).output().expect("spawn cream")
}

fn ok(args: &[&str]) -> Output {
    let out = cream(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn small_stream(dir: &Path, seed: &str) {
    let cfg = dir.join("synth.json");
    fs::write(
        &cfg,
        r#"{"docs_per_session": 120, "train_queries_per_topic": 6, "eval_queries_per_topic": 8, "eval_background_per_topic": 10}"#,
    )
    .unwrap();
    let out = dir.join("sessions");
    ok(&["synth", "--sessions", "3", "--seed", seed, "--out", out.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
}

#[test]
fn bits_reports_twelve_for_eighty_million_tokens() {
    let out = ok(&["bits", "--tokens", "80000000", "--epsilon", "0.2"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["bits"], 12);
    assert_eq!(v["buckets"], 4096);

    let out = ok(&["bits", "--tokens", "80000000"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["epsilon"].as_f64().unwrap() - 0.2021768865708778).abs() < 1e-12);

    assert!(!cream(&["bits", "--tokens", "1000", "--epsilon", "2"]).status.success());
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    small_stream(a.path(), "5");
    small_stream(b.path(), "5");
    let mut names: Vec<_> = fs::read_dir(a.path().join("sessions")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 3);
    for n in names {
        assert_eq!(
            fs::read(a.path().join("sessions").join(&n)).unwrap(),
            fs::read(b.path().join("sessions").join(&n)).unwrap()
        );
    }
}

#[test]
fn run_writes_report_snapshot_checkpoint_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    small_stream(dir.path(), "2");
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let args = |report: &str| {
        vec![
            "run".to_string(),
            "--sessions".into(),
            p("sessions"),
            "--protocol".into(),
            "disjoint".into(),
            "--seed".into(),
            "9".into(),
            "--report".into(),
            p(report),
        ]
    };
    let mut first = args("a.json");
    for (flag, path) in [("--snapshot", "snap"), ("--checkpoint", "w.ckpt"), ("--dump-samples", "samples.jsonl")] {
        first.extend([flag.to_string(), p(path)]);
    }
    ok(&first.iter().map(String::as_str).collect::<Vec<_>>());
    ok(&args("b.json").iter().map(String::as_str).collect::<Vec<_>>());

    let a = fs::read(p("a.json")).unwrap();
    assert_eq!(a, fs::read(p("b.json")).unwrap());
    let report: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["protocol"], "disjoint");
    assert_eq!(report["variant"], "full");
    assert_eq!(report["sessions"].as_array().unwrap().len(), 3);

    assert!(dir.path().join("snap/memory.json").exists());
    assert_eq!(&fs::read(p("snap/prototypes.crmp")).unwrap()[..4], b"CRMP");
    let samples = fs::read_to_string(p("samples.jsonl")).unwrap();
    let line: Value = serde_json::from_str(samples.lines().next().expect("no samples")).unwrap();
    assert!(line["session"].is_u64() && line["positive_id"].is_string());

    let mut resumed = args("c.json");
    resumed.extend(["--init-checkpoint".to_string(), p("w.ckpt")]);
    ok(&resumed.iter().map(String::as_str).collect::<Vec<_>>());
}

#[test]
fn ablate_runs_the_requested_variants() {
    let dir = tempfile::tempdir().unwrap();
    small_stream(dir.path(), "3");
    let sessions = dir.path().join("sessions");
    let out = ok(&["ablate", "--sessions", sessions.to_str().unwrap(), "--variant", "full,no-train"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|r| r["variant"].as_str().unwrap()).collect();
    assert_eq!(names, ["full", "no-train"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-train"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().to_str().unwrap();
    let out = cream(&["run", "--sessions", empty]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no session_"));

    small_stream(dir.path(), "1");
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"lamda": 2.0}"#).unwrap();
    let sessions = dir.path().join("sessions");
    let out = cream(&["run", "--sessions", sessions.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!cream(&["run", "--sessions", sessions.to_str().unwrap(), "--variant", "half"]).status.success());
}
