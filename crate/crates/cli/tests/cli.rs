use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_maskpolicy"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes anchor data, a plain-text corpus and a small training config.
struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let words = ["red", "green", "blue", "cyan", "gold", "gray", "pink", "teal"];
        let mut anchors = Vec::new();
        let mut corpus = Vec::new();
        for i in 0..60usize {
            let w = |k: usize| words[(i * 7 + k * 3) % words.len()];
            let answer = format!("{} {}", w(1), w(2));
            let context = format!("{} {} [ {} ] {} {} {}", w(3), w(4), answer, w(5), w(6), w(7));
            anchors.push(serde_json::json!({"context": context, "question": "which?", "answer": answer}).to_string());
            corpus.push(format!("{context} {context} Alan Turing wrote on March 3, 1950 ."));
        }
        let ws = Self { dir };
        fs::write(ws.path("train.jsonl"), anchors[..40].join("\n") + "\n").unwrap();
        fs::write(ws.path("valid.jsonl"), anchors[40..50].join("\n") + "\n").unwrap();
        fs::write(ws.path("dev.jsonl"), anchors[50..].join("\n") + "\n").unwrap();
        fs::write(ws.path("corpus.txt"), corpus.join("\n") + "\n").unwrap();
        fs::write(
            ws.path("config.json"),
            r#"{"training": {"epochs": 2, "embedding_dim": 6, "hidden_dim": 5, "batch_size": 8, "learning_rate": 0.01}}"#,
        )
        .unwrap();
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str) -> PathBuf {
        let out = self.path(out);
        let o = run(&[
            "train-policy",
            "--train",
            p(&self.path("train.jsonl")),
            "--valid",
            p(&self.path("valid.jsonl")),
            "--config",
            p(&self.path("config.json")),
            "--out",
            p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    }

    fn mask(&self, out: &str, run_dir: &Path, extra: &[&str]) -> Output {
        let out = self.path(out);
        let corpus = self.path("corpus.txt");
        let vocab = run_dir.join("vocab.txt");
        let ckpt = run_dir.join("checkpoint.json");
        let mut args = vec![
            "mask-corpus",
            "--corpus",
            p(&corpus),
            "--vocab",
            p(&vocab),
            "--checkpoint",
            p(&ckpt),
            "--out",
            p(&out),
            "--chunk-len",
            "16",
        ];
        args.extend_from_slice(extra);
        run(&args)
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn train_policy_writes_artifacts() {
    let ws = Workspace::new();
    let out = ws.train("run");
    for name in ["checkpoint.json", "training_log.jsonl", "vocab.txt", "manifest.json"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let log = fs::read_to_string(out.join("training_log.jsonl")).unwrap();
    let lines: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines.iter().filter(|l| l["chosen"] == true).count(), 1);

    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "train-policy");
    assert_eq!(manifest["config"]["training"]["epochs"], 2);
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 2);
    let artifacts = manifest["artifacts"].as_object().unwrap();
    let digest = maskpolicy_digest(&out.join("checkpoint.json"));
    assert_eq!(artifacts["checkpoint.json"], digest);
}

fn maskpolicy_digest(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

#[test]
fn missing_valid_is_a_usage_error() {
    let ws = Workspace::new();
    let o = run(&["train-policy", "--train", p(&ws.path("train.jsonl")), "--out", p(&ws.path("x"))]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("--valid"), "{err}");
    assert!(err.contains("Usage: maskpolicy train-policy"), "{err}");
}

#[test]
fn unknown_flag_and_bad_value_are_usage_errors() {
    let o = run(&["mask-corpus", "--bogus"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--bogus"));
    let o = run(&["mask-corpus", "--mode", "top3"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("top3"));
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn data_errors_exit_two() {
    let ws = Workspace::new();
    fs::write(ws.path("broken.jsonl"), "{\"context\": \"a b\"\n").unwrap();
    let o = run(&[
        "train-policy",
        "--train",
        p(&ws.path("broken.jsonl")),
        "--valid",
        p(&ws.path("valid.jsonl")),
        "--out",
        p(&ws.path("x")),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    fs::write(ws.path("typo.json"), r#"{"epochs": 3}"#).unwrap();
    let o = run(&["grad-check", "--config", p(&ws.path("typo.json")), "--out", p(&ws.path("y"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("epochs"));

    let o = run(&[
        "train-policy",
        "--train",
        p(&ws.path("nope.jsonl")),
        "--valid",
        p(&ws.path("valid.jsonl")),
        "--out",
        p(&ws.path("z")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_supplies_required_paths() {
    let ws = Workspace::new();
    let cfg = serde_json::json!({
        "train": ws.path("train.jsonl"),
        "valid": ws.path("valid.jsonl"),
        "seed": 4,
        "training": {"epochs": 1, "embedding_dim": 4, "hidden_dim": 3, "batch_size": 16}
    });
    fs::write(ws.path("full.json"), cfg.to_string()).unwrap();
    let out = ws.path("from_config");
    let o = run(&["train-policy", "--config", p(&ws.path("full.json")), "--seed", "9", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["seeds"]["training"], 9);
    assert_eq!(manifest["config"]["training"]["seed"], 9);
}

#[test]
fn learned_masking_is_reproducible() {
    let ws = Workspace::new();
    let trained = ws.train("run");
    let digests = |out: &str, workers: &str| -> (String, String) {
        let o = ws.mask(out, &trained, &["--policy", "learned", "--mode", "top1", "--seed", "7", "--workers", workers]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let dir = ws.path(out);
        (maskpolicy_digest(&dir.join("masked.jsonl")), maskpolicy_digest(&dir.join("summary.json")))
    };
    let first = digests("m1", "1");
    assert!(fs::read_to_string(ws.path("m1").join("masked.jsonl")).unwrap().lines().count() >= 60);
    assert_eq!(first, digests("m2", "1"));
    assert_eq!(first, digests("m3", "2"));
    assert_eq!(first, digests("m4", "8"));

    let manifest = read_json(&ws.path("m1").join("manifest.json"));
    assert_eq!(manifest["artifacts"]["masked.jsonl"], first.0);
    assert_eq!(manifest["seeds"]["global"], 7);

    let summary = read_json(&ws.path("m1").join("summary.json"));
    let keys: Vec<&String> = summary.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["chunks", "masked_token_rate", "span_length_hist"]);
    let first_line = fs::read_to_string(ws.path("m1").join("masked.jsonl")).unwrap();
    let record: Value = serde_json::from_str(first_line.lines().next().unwrap()).unwrap();
    assert_eq!(record["policy"], "learned-top1");
}

#[test]
fn learned_masking_requires_matching_vocab() {
    let ws = Workspace::new();
    let trained = ws.train("run");
    fs::write(ws.path("other_vocab.txt"), "<pad>\n<unk>\n<mask>\nzzz\n").unwrap();
    let o = run(&[
        "mask-corpus",
        "--corpus",
        p(&ws.path("corpus.txt")),
        "--vocab",
        p(&ws.path("other_vocab.txt")),
        "--checkpoint",
        p(&trained.join("checkpoint.json")),
        "--policy",
        "learned",
        "--out",
        p(&ws.path("m")),
    ]);
    assert_eq!(code(&o), 2);
    let o = ws.mask("m", &trained, &["--policy", "learned"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn baselines_evaluate_and_compare() {
    let ws = Workspace::new();
    let trained = ws.train("run");
    let o = ws.mask("masked", &trained, &["--policy", "salient", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let mut reports = Vec::new();
    for (policy, out) in [("learned", "e1"), ("randomspan", "e2"), ("salient", "e3")] {
        let dir = ws.path(out);
        let o = run(&[
            "eval-policy",
            "--dev",
            p(&ws.path("dev.jsonl")),
            "--policy",
            policy,
            "--checkpoint",
            p(&trained.join("checkpoint.json")),
            "--vocab",
            p(&trained.join("vocab.txt")),
            "--masked",
            p(&ws.path("masked").join("masked.jsonl")),
            "--out",
            p(&dir),
        ]);
        assert_eq!(code(&o), 0, "{policy}: {}", stderr(&o));
        let report = read_json(&dir.join("report.json"));
        assert_eq!(report["policy"], policy);
        assert_eq!(report["n"], 10);
        assert!(report["em_at_1"].as_f64().unwrap() <= report["em_at_5"].as_f64().unwrap());
        assert!(report["answer_coverage"].is_f64());
        reports.push(dir.join("report.json"));
    }

    let cmp = ws.path("cmp");
    let o = run(&["compare", "--reports", p(&reports[0]), p(&reports[1]), p(&reports[2]), "--out", p(&cmp)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(cmp.join("comparison.txt")).unwrap();
    assert_eq!(table.lines().count(), 4);
    let json = read_json(&cmp.join("comparison.json"));
    let em5: Vec<f64> = json.as_array().unwrap().iter().map(|r| r["em_at_5"].as_f64().unwrap()).collect();
    assert!(em5.windows(2).all(|w| w[0] >= w[1]));

    let o = run(&["compare", "--reports", p(&reports[0]), "--out", p(&cmp)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn random_baselines_mask_corpus() {
    let ws = Workspace::new();
    let vocab_dir = ws.path("vocab");
    let o = run(&["build-vocab", "--corpus", p(&ws.path("corpus.txt")), "--out", p(&vocab_dir)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for policy in ["random15", "randomspan", "salient"] {
        let out = ws.path(policy);
        let o = run(&[
            "mask-corpus",
            "--corpus",
            p(&ws.path("corpus.txt")),
            "--vocab",
            p(&vocab_dir.join("vocab.txt")),
            "--policy",
            policy,
            "--chunk-len",
            "16",
            "--out",
            p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let text = fs::read_to_string(out.join("masked.jsonl")).unwrap();
        assert!(text.lines().count() > 0);
        let record: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(record["policy"], policy);
    }
    let o = run(&["mask-corpus", "--corpus", p(&ws.path("corpus.txt")), "--vocab", p(&vocab_dir.join("vocab.txt")), "--policy", "learned", "--out", p(&ws.path("q"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--checkpoint"));
}

#[test]
fn grad_check_passes() {
    let ws = Workspace::new();
    let out = ws.path("gc");
    let o = run(&["grad-check", "--seeds", "5", "--seed", "3", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = read_json(&out.join("gradcheck.json"));
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["instances"], 5);
}
