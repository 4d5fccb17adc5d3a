use std::path::Path;
use std::process::{Command, Output};

use lsr_core::eval::{DataSource, ExperimentConfig, ModelShape, SynthConfig};
use lsr_core::training::TrainConfig;

fn lsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = lsr(args);
    assert!(
        out.status.success(),
        "lsr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let cfg = ExperimentConfig {
        data: DataSource::Synthetic(SynthConfig {
            passages: 60,
            eval_queries: 15,
            entities: 12,
            fillers: 25,
            ..SynthConfig::default()
        }),
        model: ModelShape {
            d: 8,
            n_layers: 1,
            d_ff: 16,
            max_len: 24,
            ..ModelShape::default()
        },
        train: TrainConfig {
            gating_iterations: 10,
            joint_iterations: 10,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(lsr(&[]).status.code(), Some(1));
    assert_eq!(lsr(&["index", "search", "--bogus"]).status.code(), Some(1));
    assert_eq!(lsr(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = lsr(&["vocab", "build", "--corpus", "/nonexistent/x.tsv", "--out", p(&dir.path().join("v.txt"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn end_to_end_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = tiny_config(dir);
    let c = p(&cfg);
    let data = dir.join("data");
    let f = |name: &str| dir.join(name);
    let d = |name: &str| data.join(name);

    ok(&["--config", c, "generate", "--out-dir", p(&data)]);
    ok(&[
        "vocab", "build", "--corpus", p(&d("passages.tsv")), p(&d("queries.tsv")), p(&d("train_queries.tsv")),
        "--out", p(&f("vocab.txt")),
    ]);
    let vocab = p(&dir.join("vocab.txt")).to_string();

    ok(&["bm25", "index", "--vocab", &vocab, "--passages", p(&d("passages.tsv")), "--out", p(&f("bm25.idx"))]);
    ok(&[
        "bm25", "search", "--index", p(&f("bm25.idx")), "--vocab", &vocab, "--queries", p(&d("queries.tsv")),
        "--k", "50", "--out", p(&f("bm25.run")),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&ok(&["eval", "run", "--run", p(&f("bm25.run")), "--qrels", p(&d("qrels.tsv"))])).unwrap();
    assert_eq!(report["queries"], 15);
    let mrr = report["mrr@10"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mrr));

    ok(&[
        "--config", c, "make-triples", "--passages", p(&d("passages.tsv")), "--queries", p(&d("train_queries.tsv")),
        "--qrels", p(&d("train_qrels.tsv")), "--vocab", &vocab, "--out", p(&f("triples.tsv")),
    ]);
    ok(&[
        "--config", c, "train", "gating", "--pairs", p(&d("pairs.tsv")), "--vocab", &vocab, "--out",
        p(&f("gate.ckpt")), "--curve", p(&f("gate.csv")),
    ]);
    assert!(std::fs::read_to_string(f("gate.csv")).unwrap().lines().count() > 1);

    // expansion-enhanced training without a gating checkpoint is refused
    let refused = lsr(&[
        "--config", c, "train", "joint", "--triples", p(&f("triples.tsv")), "--vocab", &vocab, "--out",
        p(&f("model.ckpt")),
    ]);
    assert_eq!(refused.status.code(), Some(2));

    ok(&[
        "--config", c, "train", "joint", "--triples", p(&f("triples.tsv")), "--vocab", &vocab, "--gating",
        p(&f("gate.ckpt")), "--out", p(&f("model.ckpt")),
    ]);
    ok(&[
        "index", "build", "--model", p(&f("model.ckpt")), "--vocab", &vocab, "--passages", p(&d("passages.tsv")),
        "--out", p(&f("lsr.idx")),
    ]);
    ok(&[
        "index", "search", "--index", p(&f("lsr.idx")), "--model", p(&f("model.ckpt")), "--vocab", &vocab,
        "--queries", p(&d("queries.tsv")), "--k", "20", "--out", p(&f("lsr.run")),
    ]);
    let report: serde_json::Value = serde_json::from_str(&ok(&[
        "eval", "run", "--run", p(&f("lsr.run")), "--qrels", p(&d("qrels.tsv")), "--cutoffs", "10,20",
    ]))
    .unwrap();
    assert!(report["recall@20"].as_f64().unwrap() >= report["recall@10"].as_f64().unwrap());

    ok(&[
        "represent", "--model", p(&f("model.ckpt")), "--vocab", &vocab, "--input", p(&d("queries.tsv")), "--queries",
        "--out", p(&f("q.jsonl")),
    ]);
    let first = std::fs::read_to_string(f("q.jsonl")).unwrap();
    let row: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert!(row["terms"].is_array());

    let unknown = lsr(&[
        "explain", "--model", p(&f("model.ckpt")), "--vocab", &vocab, "--passage", "entity1 word2", "--term",
        "notaword",
    ]);
    assert_eq!(unknown.status.code(), Some(2));
}
