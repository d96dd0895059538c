use std::path::Path;
use std::process::{Command, Output};

fn slicewatch(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slicewatch"))
        .args(args)
        .current_dir(dir)
        .env_remove("SLICEWATCH_OUT")
        .env("SLICEWATCH_WORKERS", "2")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let o = slicewatch(dir, args);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

const TINY: &[&str] = &[
    "--seeds",
    "2",
    "--duration",
    "30",
    "--intensities",
    "0.2",
    "--sweep-windows",
    "2",
    "--lr-c",
    "1",
    "--rf-trees",
    "10",
    "--rf-depths",
    "8",
    "--folds",
    "3",
];

#[test]
fn help_and_version_exit_zero() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(slicewatch(d.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(slicewatch(d.path(), &["--version"]).status.code(), Some(0));
    assert_eq!(
        slicewatch(d.path(), &["serve", "--help"]).status.code(),
        Some(0)
    );
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &["train", "--dataset", "x.csv"],
        &[
            "train",
            "--dataset",
            "x.csv",
            "--slice",
            "video",
            "--model",
            "rf",
            "--out",
            "m.json",
        ],
        &["repro", "--window", "9", "--out", "r"],
        &[
            "repro",
            "--intensities",
            "0.1",
            "--headline-intensity",
            "0.2",
            "--out",
            "r",
        ],
    ] {
        let o = slicewatch(d.path(), args);
        assert_eq!(
            o.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn missing_dataset_is_a_clear_data_error() {
    let d = tempfile::tempdir().unwrap();
    let o = slicewatch(
        d.path(),
        &[
            "train",
            "--dataset",
            "nope.csv",
            "--slice",
            "embb",
            "--model",
            "rf",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("nope.csv"), "{err}");
    assert!(!d.path().join("m.json").exists());
}

#[test]
fn malformed_dataset_is_a_data_error() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.csv"), "a,b,c\n1,2,3\n").unwrap();
    let o = slicewatch(
        d.path(),
        &["evaluate", "--dataset", "bad.csv", "--model", "bad.csv"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pipeline_from_capture_to_verdicts() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(
        p,
        &[
            "generate",
            "--seed",
            "3",
            "--duration",
            "40",
            "--out",
            "benign.bin",
            "--save-config",
            "scenario.toml",
        ],
    );
    ok(
        p,
        &[
            "generate",
            "--config",
            "scenario.toml",
            "--out",
            "benign.csv",
        ],
    );
    ok(
        p,
        &[
            "inject",
            "--stream",
            "benign.csv",
            "--out",
            "attacked.csv",
            "--events",
            "events.jsonl",
            "--seed",
            "3",
        ],
    );
    ok(
        p,
        &[
            "featurize",
            "--stream",
            "attacked.csv",
            "--events",
            "events.jsonl",
            "--out",
            "data.csv",
            "--windows",
            "w.csv",
        ],
    );
    assert!(p.join("w.csv.series").exists());
    for s in ["embb", "urllc", "mmtc"] {
        ok(
            p,
            &[
                "train",
                "--dataset",
                "data.csv",
                "--slice",
                s,
                "--model",
                "rf",
                "--rf-trees",
                "10",
                "--rf-depths",
                "8",
                "--out",
                &format!("models/{s}.json"),
            ],
        );
    }
    ok(
        p,
        &[
            "train",
            "--dataset",
            "data.csv",
            "--slice",
            "all",
            "--model",
            "lr",
            "--out",
            "models/all.json",
        ],
    );
    let o = ok(
        p,
        &[
            "evaluate",
            "--dataset",
            "data.csv",
            "--model",
            "models/embb.json",
            "--out",
            "m.json",
            "--roc",
            "roc.csv",
        ],
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("f1"));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("m.json")).unwrap()).unwrap();
    assert!(m["f1"].as_f64().unwrap() > 0.5);
    ok(
        p,
        &[
            "serve",
            "--models",
            "models/embb.json",
            "models/urllc.json",
            "models/mmtc.json",
            "models/all.json",
            "--input",
            "attacked.csv",
            "--verdicts",
            "v.jsonl",
            "--unscored",
            "u.jsonl",
            "--stats",
            "stats.json",
        ],
    );
    let verdicts = std::fs::read_to_string(p.join("v.jsonl")).unwrap();
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("stats.json")).unwrap()).unwrap();
    assert_eq!(
        verdicts.lines().count() as u64,
        stats["windows"].as_u64().unwrap()
    );
    assert_eq!(stats["dropped"].as_u64(), Some(0));
    assert_eq!(std::fs::read_to_string(p.join("u.jsonl")).unwrap(), "");
}

#[test]
fn repro_check_failure_exits_three_and_report_resumes() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let mut args = vec!["repro"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--out", "run", "--check"]);
    // two seeds cannot satisfy the leave-one-session-out check
    let o = slicewatch(p, &args);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let metrics = std::fs::read(p.join("run/report/metrics.csv")).unwrap();
    let o = slicewatch(
        p,
        &[
            "report",
            "--manifest",
            "run/manifest.json",
            "--out",
            "again",
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(
        std::fs::read(p.join("again/report/metrics.csv")).unwrap(),
        metrics
    );
}

#[test]
fn output_root_comes_from_the_environment() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["repro"];
    args.extend_from_slice(TINY);
    let o = Command::new(env!("CARGO_BIN_EXE_slicewatch"))
        .args(&args)
        .current_dir(d.path())
        .env("SLICEWATCH_OUT", d.path().join("root"))
        .env("SLICEWATCH_WORKERS", "1")
        .output()
        .unwrap();
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(d.path().join("root/repro/manifest.json").exists());
    assert!(d.path().join("root/repro/report/summary.txt").exists());
}
