use std::path::Path;
use std::process::{Command, Output};

fn hmgrl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmgrl"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("process exited normally")
}

#[test]
fn synth_train_eval_predict_split() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = hmgrl(
        &[
            "synth",
            "--drugs",
            "16",
            "--events",
            "3",
            "--density",
            "0.5",
            "--out",
            "data",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let common = [
        "--preset",
        "micro",
        "--drugs",
        "data/drugs.tsv",
        "--ddis",
        "data/ddis.tsv",
        "--folds",
        "3",
    ];
    let mut train = vec![
        "train",
        "--epochs",
        "2",
        "--only-folds",
        "1",
        "--run-dir",
        "run",
        "--eval",
    ];
    train.extend(common);
    let o = hmgrl(&train, d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("fold 1: aupr"), "{stdout}");
    for f in [
        "config.toml",
        "split.json",
        "log/fold-1.jsonl",
        "checkpoint/fold-1.ckpt",
        "metrics/fold-1.json",
        "metrics/summary.json",
    ] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }

    std::fs::write(d.join("pairs.tsv"), "SYN0001\tSYN0002\n").unwrap();
    let o = hmgrl(
        &[
            "predict",
            "--checkpoint",
            "run/checkpoint/fold-1.ckpt",
            "--drugs",
            "data/drugs.tsv",
            "--pairs",
            "pairs.tsv",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout)
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("SYN0001\tSYN0002\t"));

    let mut split = vec!["split", "--task", "2", "--out", "split.json"];
    split.extend(common);
    assert_eq!(code(&hmgrl(&split, d)), 0);
    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("split.json")).unwrap()).unwrap();
    assert_eq!(plan["task"], 2);
    assert_eq!(plan["folds"].as_array().unwrap().len(), 3);

    // Evaluating the same run again reproduces the summary.
    let before = std::fs::read(d.join("run/metrics/summary.json")).unwrap();
    assert_eq!(code(&hmgrl(&["eval", "run"], d)), 0);
    assert_eq!(
        std::fs::read(d.join("run/metrics/summary.json")).unwrap(),
        before
    );
}

#[test]
fn failures_map_to_category_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&hmgrl(&["frobnicate"], d)), 2);
    assert_eq!(code(&hmgrl(&["train", "--preset", "nope"], d)), 3);
    assert_eq!(code(&hmgrl(&["synth", "--drugs", "3", "--out", "x"], d)), 3);
    std::fs::write(
        d.join("drugs.tsv"),
        "#hmgrl-drugs v1 targets=2 enzymes=2 substructures=2\nD1\tC\t0\t0\n",
    )
    .unwrap();
    std::fs::write(d.join("ddis.tsv"), "").unwrap();
    let o = hmgrl(
        &[
            "split",
            "--drugs",
            "drugs.tsv",
            "--ddis",
            "ddis.tsv",
            "--out",
            "s.json",
        ],
        d,
    );
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("drugs.tsv:2"));
    let o = hmgrl(&["eval", "missing-run"], d);
    assert_eq!(code(&o), 6, "{}", String::from_utf8_lossy(&o.stderr));
}
