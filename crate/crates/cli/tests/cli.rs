use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sickle(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sickle"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sickle(dir.path(), &["bogus"]).status.code(), Some(1));
    assert_eq!(sickle(dir.path(), &[]).status.code(), Some(1));
    assert_eq!(sickle(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(
        sickle(dir.path(), &["synth", "--svm.gama=2"]).status.code(),
        Some(1)
    );
    assert_eq!(
        sickle(dir.path(), &["synth", "--svm.gamma"]).status.code(),
        Some(1)
    );

    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"solidity_threshold": 1.5}"#,
    )
    .unwrap();
    let out = sickle(dir.path(), &["synth", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solidity"));
}

#[test]
fn synth_writes_corpus_and_echoes_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"svm": {"gamma": 1}, "rf": {"trees": 40}}"#,
    )
    .unwrap();
    let out = sickle(
        dir.path(),
        &[
            "synth",
            "--seed",
            "7",
            "--out",
            "data/",
            "--config",
            "run.json",
            "--svm.gamma=2",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&out);
    assert_eq!(report["samples"], 156);
    assert_eq!(report["config"]["svm"]["gamma"], 2.0);
    assert_eq!(report["config"]["rf"]["trees"], 40);
    assert_eq!(report["config"]["seed"], 7);
    let manifest = std::fs::read_to_string(dir.path().join("data/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 157);
    assert_eq!(
        manifest.lines().filter(|l| l.ends_with(",test")).count(),
        27
    );
    assert_eq!(
        std::fs::read_dir(dir.path().join("data/images"))
            .unwrap()
            .count(),
        156
    );
    assert_eq!(
        std::fs::read_dir(dir.path().join("data/masks"))
            .unwrap()
            .count(),
        156
    );
}

#[test]
fn train_screen_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let light = ["--segmenter.trees=10", "--segmenter.per_class=300"];
    assert_eq!(
        sickle(d, &["synth", "--out", "data"]).status.code(),
        Some(0)
    );

    let mut args = vec![
        "train-seg",
        "--data",
        "data",
        "--out",
        "models/segmenter.json",
    ];
    args.extend(light);
    let out = sickle(d, &args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&out);
    assert!(
        report["val_accuracy"].as_f64().unwrap() > report["majority_baseline"].as_f64().unwrap()
    );
    let first = std::fs::read(d.join("models/segmenter.json")).unwrap();
    args[4] = "models/again.json";
    assert_eq!(sickle(d, &args).status.code(), Some(0));
    assert_eq!(first, std::fs::read(d.join("models/again.json")).unwrap());

    // default model locations from here on
    let out = sickle(d, &["train-cls", "--data", "data"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(d.join("models/classifier.json").exists());

    let out = sickle(
        d,
        &[
            "screen",
            "--p1",
            "data/images/normal_c01_000.pgm",
            "--p2",
            "data/images/normal_c03_000.pgm",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&out);
    assert_eq!(report["decision"], "Normal");
    assert!(report["config"].is_object());

    let out = sickle(
        d,
        &["classify", "--image", "data/images/diseased_c01_020.pgm"],
    );
    assert_eq!(json(&out)["predicted"], "diseased");

    let out = sickle(d, &["eval", "--data", "data", "--report", "out/eval.json"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["per_sample"].as_array().unwrap().len(), 27);
    assert!(report["accuracy"].as_f64().unwrap() >= 0.9);
    assert_eq!(std::fs::read(d.join("out/eval.json")).unwrap(), out.stdout);

    let out = sickle(
        d,
        &[
            "segment",
            "--image",
            "data/images/normal_c01_001.pgm",
            "--out",
            "m.pgm",
            "--cells",
            "cells.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(d.join("cells.csv")).unwrap();
    assert!(csv.starts_with("region_id,area,perimeter,form_factor,roundness,solidity,kept"));

    let out = sickle(d, &["grid-search", "--data", "data"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["cells"].as_array().unwrap().len(), 20);

    // data errors
    std::fs::write(d.join("junk.pgm"), b"not an image").unwrap();
    assert_eq!(
        sickle(d, &["classify", "--image", "junk.pgm"])
            .status
            .code(),
        Some(2)
    );
    let mut blank = b"P5\n64 64\n255\n".to_vec();
    blank.extend(std::iter::repeat_n(150u8, 64 * 64));
    std::fs::write(d.join("blank.pgm"), blank).unwrap();
    let out = sickle(d, &["classify", "--image", "blank.pgm"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unreadable"));
    assert_eq!(
        sickle(d, &["eval", "--data", "missing"]).status.code(),
        Some(2)
    );
}
