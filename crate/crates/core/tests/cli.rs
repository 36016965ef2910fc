use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use deid::corpus::{load_corpus, parse_annotations};
use deid::pipeline::redact;

fn deid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = deid(args);
    assert!(
        out.status.success(),
        "deid {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

const TINY: &str = r#"{"d_char": 4, "d_char_lstm": 4, "d_token": 8, "d_label_lstm": 8, "d_feat": 4, "max_epochs": 3}"#;

#[test]
fn gen_corpus_layout_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let summary = ok(&["gen-corpus", "--n", "10", "--seed", "1", "--out", s(&a)]);
    assert!(summary.contains("type\tspans\ttokens"));
    ok(&["gen-corpus", "--n", "10", "--seed", "1", "--out", s(&b)]);
    let files = dir_bytes(&a);
    assert_eq!(files.len(), 30);
    for ext in [".txt", ".ann", ".meta.json"] {
        assert_eq!(files.iter().filter(|(n, _)| n.ends_with(ext)).count(), 10, "{ext}");
    }
    assert_eq!(files, dir_bytes(&b));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = deid(&["gen-corpus", "--n", "0", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(deid(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(deid(&["feature-dump", "--corpus", "x", "--features", "some"]).status.code(), Some(2));
}

#[test]
fn missing_inputs_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let out = deid(&["train", "--corpus", s(&tmp.path().join("nope")), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    let corpus = tmp.path().join("c");
    ok(&["gen-corpus", "--n", "10", "--out", s(&corpus)]);
    let out = deid(&[
        "train",
        "--corpus",
        s(&corpus),
        "--embeddings",
        s(&tmp.path().join("missing.vec")),
        "--out",
        s(&tmp.path().join("m")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.vec"));
}

#[test]
fn feature_dump_lists_every_token() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c");
    ok(&["gen-corpus", "--n", "2", "--seed", "4", "--out", s(&corpus)]);
    let dump = ok(&["feature-dump", "--corpus", s(&corpus), "--features", "ehr"]);
    assert!(!dump.is_empty());
    let file = tmp.path().join("dump.txt");
    ok(&["feature-dump", "--corpus", s(&corpus), "--features", "ehr", "--out", s(&file)]);
    assert_eq!(fs::read_to_string(file).unwrap(), dump);
}

/// One short training run shared by the model-consuming checks.
#[test]
fn train_predict_evaluate_deidentify() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    ok(&["gen-corpus", "--n", "20", "--seed", "3", "--out", s(&corpus)]);
    let config = tmp.path().join("tiny.json");
    fs::write(&config, TINY).unwrap();
    let out = tmp.path().join("model");
    let train = |dir: &Path, criterion: &str| {
        ok(&[
            "train",
            "--corpus",
            s(&corpus),
            "--features",
            "ehr",
            "--config",
            s(&config),
            "--max-epochs",
            "2",
            "--criterion",
            criterion,
            "--seed",
            "5",
            "--out",
            s(dir),
        ])
    };
    train(&out, "recall");

    // Flags beat the config file, which beats defaults.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("experiment.json")).unwrap()).unwrap();
    assert_eq!(manifest["schema_len"], 4);
    assert_eq!(manifest["criterion"], "recall");
    assert_eq!(manifest["config"]["max_epochs"], 2);
    assert_eq!(manifest["config"]["d_token"], 8);
    assert_eq!(manifest["config"]["patience"], 10);
    assert_eq!(manifest["seeds"], serde_json::json!([5]));
    assert_eq!(manifest["runs"][0]["records"].as_array().unwrap().len(), 2);
    let log = fs::read_to_string(out.join("seed-5/training.log")).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(log.lines().all(|l| l.split('\t').count() == 5));

    let first = fs::read(out.join("experiment.json")).unwrap();
    train(&out, "recall");
    assert_eq!(first, fs::read(out.join("experiment.json")).unwrap());
    let f1_dir = tmp.path().join("model-f1");
    train(&f1_dir, "f1");
    let f1: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(f1_dir.join("experiment.json")).unwrap()).unwrap();
    assert_eq!(f1["criterion"], "f1");

    let model = out.join("model.ckpt");
    assert!(model.exists());

    // Predictions, then evaluation against gold.
    let pred = tmp.path().join("pred");
    ok(&["predict", "--model", s(&model), "--corpus", s(&corpus), "--out", s(&pred)]);
    assert_eq!(
        fs::read_dir(&pred).unwrap().count(),
        20,
        "one .ann per note"
    );
    let report_dir = tmp.path().join("report");
    let tsv = ok(&[
        "evaluate",
        "--corpus",
        s(&corpus),
        "--pred",
        s(&pred),
        "--out",
        s(&report_dir),
    ]);
    assert!(tsv.starts_with("scope\tP\tR\tF1\tsupport\n"));
    assert_eq!(fs::read_to_string(report_dir.join("report.tsv")).unwrap(), tsv);
    let via_model = ok(&["evaluate", "--corpus", s(&corpus), "--model", s(&model)]);
    assert_eq!(via_model, tsv);

    // Gold scored against itself.
    let perfect = ok(&["evaluate", "--corpus", s(&corpus), "--pred", s(&corpus)]);
    for line in perfect.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(&cols[1..4], &["100.00", "100.00", "100.00"], "{line}");
    }

    // Redaction follows the predicted spans exactly.
    let redacted = tmp.path().join("redacted");
    ok(&["deidentify", "--model", s(&model), "--corpus", s(&corpus), "--out", s(&redacted)]);
    for doc in load_corpus(&corpus).unwrap() {
        let spans = parse_annotations(
            &doc.doc_id,
            &fs::read_to_string(pred.join(format!("{}.ann", doc.doc_id))).unwrap(),
        )
        .unwrap();
        let got = fs::read_to_string(redacted.join(format!("{}.txt", doc.doc_id))).unwrap();
        assert_eq!(got, redact(&doc.text, &spans));
    }

    // Schema mismatch between flags and model.
    let out = deid(&[
        "predict",
        "--model",
        s(&model),
        "--corpus",
        s(&corpus),
        "--features",
        "all",
        "--out",
        s(&tmp.path().join("p2")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("features"));
    ok(&[
        "predict",
        "--model",
        s(&model),
        "--corpus",
        s(&corpus),
        "--features",
        "ehr",
        "--out",
        s(&tmp.path().join("p3")),
    ]);

    // Empty corpus: nothing written, success.
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let pe = tmp.path().join("pe");
    ok(&["predict", "--model", s(&model), "--corpus", s(&empty), "--out", s(&pe)]);
    assert_eq!(fs::read_dir(&pe).unwrap().count(), 0);
}
