use std::path::Path;
use std::process::{Command, Output};

fn mixnl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixnl"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, task: &str) {
    ok(mixnl(
        &[
            "synth",
            "--out",
            "d",
            "--task",
            task,
            "--seed",
            "3",
            "--labeled",
            "40",
            "--unlabeled",
            "40",
            "--dev",
            "20",
            "--test",
            "20",
        ],
        dir,
    ));
}

const SMALL: &[&str] = &[
    "--epochs",
    "2",
    "--dim",
    "8",
    "--ff-dim",
    "16",
    "--layers",
    "1",
    "--max-len",
    "24",
];

fn train_args<'a>(method: &'a str, metrics: &'a str) -> Vec<&'a str> {
    let mut a = vec![
        "train",
        "--train",
        "d/labeled.jsonl",
        "--dev",
        "d/dev.jsonl",
        "--unlabeled",
        "d/unlabeled.jsonl",
        "--method",
        method,
        "--metrics",
        metrics,
    ];
    a.extend_from_slice(SMALL);
    a
}

#[test]
fn repeated_train_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "tagging");
    for method in ["baseline", "da", "mixda", "mixmatch"] {
        ok(mixnl(&train_args(method, "a.jsonl"), dir.path()));
        ok(mixnl(&train_args(method, "b.jsonl"), dir.path()));
        let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
        assert!(!a.is_empty());
        assert_eq!(
            a,
            std::fs::read(dir.path().join("b.jsonl")).unwrap(),
            "{method}"
        );
    }
    let first = std::fs::read_to_string(dir.path().join("a.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    for key in ["epoch", "split", "metric", "value"] {
        assert!(rec.get(key).is_some(), "{key}");
    }
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "spancls");
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"task": "spancls", "method": "mixda", "op": "SPR", "epochs": 1, "dim": 8, "ff-dim": 8, "layers": 1,
            "max-len": 24, "train": "d/labeled.jsonl", "dev": "d/dev.jsonl", "checkpoint": "m.ckpt"}"#,
    )
    .unwrap();
    let out = ok(mixnl(
        &[
            "train",
            "--config",
            "c.json",
            "--epochs",
            "2",
            "--metrics",
            "m.jsonl",
        ],
        dir.path(),
    ));
    let summary: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert!(summary["dev"]["macro-f1"].is_number());
    let metrics = std::fs::read_to_string(dir.path().join("m.jsonl")).unwrap();
    assert!(metrics.contains("\"epoch\":2"));
    let eval = ok(mixnl(
        &[
            "evaluate",
            "--checkpoint",
            "m.ckpt",
            "--data",
            "d/dev.jsonl",
        ],
        dir.path(),
    ));
    let scores: serde_json::Value = serde_json::from_str(eval.trim()).unwrap();
    assert!(
        (scores["macro-f1"].as_f64().unwrap() - summary["dev"]["macro-f1"].as_f64().unwrap()).abs()
            < 1e-6
    );
}

#[test]
fn tfidf_and_augment_outputs() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "tagging");
    let table = ok(mixnl(&["tfidf", "--input", "d/labeled.jsonl"], dir.path()));
    assert_eq!(table.lines().next(), Some("token\tdf\tidf\tscore"));
    ok(mixnl(
        &[
            "augment",
            "--input",
            "d/labeled.jsonl",
            "--out",
            "aug.jsonl",
            "--op",
            "INS",
            "--seed",
            "2",
        ],
        dir.path(),
    ));
    let text = std::fs::read_to_string(dir.path().join("aug.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 40);
    for line in text.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(rec["op"], "INS");
        assert!(rec["edits"].is_array());
        assert_eq!(
            rec["tokens"].as_array().unwrap().len(),
            rec["tags"].as_array().unwrap().len()
        );
    }
}

#[test]
fn experiment_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "tagging");
    let mut args = vec![
        "experiment",
        "--train",
        "d/labeled.jsonl",
        "--dev",
        "d/dev.jsonl",
        "--test",
        "d/test.jsonl",
        "--sizes",
        "10,full",
        "--samples",
        "1",
        "--runs",
        "2",
        "--methods",
        "baseline,mixda",
        "--out",
        "t.csv",
    ];
    args.extend_from_slice(SMALL);
    let means = ok(mixnl(&args, dir.path()));
    assert_eq!(means.lines().count(), 4);
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("size,method,sample,seed,metric,value")
    );
    assert_eq!(csv.lines().filter(|l| l.contains(",f1,")).count(), 8);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "tagging");
    let code = |args: &[&str]| mixnl(args, dir.path()).status.code();
    assert_eq!(
        code(&[
            "train",
            "--train",
            "d/labeled.jsonl",
            "--method",
            "mixmatch"
        ]),
        Some(2)
    );
    assert_eq!(
        code(&["train", "--train", "d/labeled.jsonl", "--batch-size", "0"]),
        Some(2)
    );
    assert_eq!(
        code(&["train", "--train", "d/labeled.jsonl", "--op", "XX"]),
        Some(2)
    );
    assert_eq!(code(&["train", "--train", "missing.jsonl"]), Some(3));
    std::fs::write(
        dir.path().join("bad.jsonl"),
        "{\"tokens\": [\"a\"], \"tags\": [\"I-AS\"]}\n",
    )
    .unwrap();
    assert_eq!(code(&["train", "--train", "bad.jsonl"]), Some(3));
    assert_eq!(
        code(&[
            "train",
            "--train",
            "d/labeled.jsonl",
            "--dev",
            "d/dev.jsonl",
            "--lr",
            "1e300",
            "--epochs",
            "1"
        ]),
        Some(4)
    );
    assert_eq!(
        code(&[
            "evaluate",
            "--checkpoint",
            "d/dev.jsonl",
            "--data",
            "d/dev.jsonl"
        ]),
        Some(3)
    );
    assert_eq!(
        code(&[
            "synth",
            "--out",
            "x",
            "--seed",
            "1",
            "--labeled",
            "2",
            "--unlabeled",
            "0",
            "--dev",
            "0",
            "--test",
            "0"
        ]),
        Some(0)
    );
}
