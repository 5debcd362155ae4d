use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_clinsent");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("CLIN_SENT_CONFIG").output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

/// A scaled-down generator spec and a fast training config.
fn small_setup(dir: &Path) -> (PathBuf, PathBuf) {
    let mut spec: Value = serde_json::from_str(&fs::read_to_string(data("table2_genspec.json")).unwrap()).unwrap();
    for cell in spec["cells"].as_array_mut().unwrap() {
        let n = cell["count"].as_u64().unwrap();
        cell["count"] = (n / 8).max(4).into();
    }
    let spec_path = dir.join("small_spec.json");
    fs::write(&spec_path, spec.to_string()).unwrap();
    let cfg = dir.join("cfg.json");
    fs::write(&cfg, r#"{"hyperparams": {"epochs": 15, "hidden_units": 24}, "embeddings": {"hashing": {"dim": 96, "seed": 2}}}"#).unwrap();
    let out = dir.join("gen");
    ok(&["--out", s(&out), "--seed", "11", "gen-synth", "--genspec", s(&spec_path), "--name", "corpus.jsonl"]);
    (out.join("corpus.jsonl"), cfg)
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("run_manifest.json")).unwrap()).unwrap()
}

#[test]
fn stats_reproduce_reference_distribution() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    ok(&["--out", s(out), "--seed", "4", "gen-synth"]);
    let tsv = ok(&["--out", s(out), "stats", "--corpus", s(&out.join("synthetic.jsonl"))]);
    let expected = "\
domain\tpositive\tnegative\tneutral
appearance\t290\t69\t141
mood\t100\t322\t77
interpersonal\t205\t165\t130
substance_use\t181\t261\t58
occupation\t250\t143\t150
thought_process\t150\t266\t84
thought_content\t183\t253\t64
";
    assert_eq!(tsv, expected);
    assert_eq!(fs::read_to_string(out.join("stats.tsv")).unwrap(), expected);
}

#[test]
fn aggregating_reference_baseline_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(&[
        "--out",
        s(tmp.path()),
        "evaluate",
        "--rows",
        s(&data("table4_baseline_rows.tsv")),
        "--aggregate-only",
    ]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2, "{stdout}");
    let all: Vec<&str> = lines[1].split('\t').collect();
    assert_eq!(all[0], "all");
    assert_eq!(all[3], "0.319");
    let json: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("eval.json")).unwrap()).unwrap();
    let f1 = json["all"]["positive"]["f1"].as_f64().unwrap();
    assert!((f1 - 0.319).abs() < 5e-4, "{f1}");
}

fn pipeline(corpus: &Path, cfg: &Path, out: &Path) -> String {
    ok(&["--config", s(cfg), "--out", s(out), "--seed", "21", "train", "--corpus", s(corpus)]);
    ok(&["--config", s(cfg), "--out", s(out), "predict", "--model", s(&out.join("model")), "--corpus", s(corpus)]);
    ok(&["--out", s(out), "evaluate", "--corpus", s(corpus), "--predictions", s(&out.join("predictions.jsonl"))]);
    fs::read_to_string(out.join("eval.json")).unwrap()
}

#[test]
fn train_predict_evaluate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (corpus, cfg) = small_setup(tmp.path());
    let before = fs::read(&corpus).unwrap();
    let a = pipeline(&corpus, &cfg, &tmp.path().join("a"));
    let b = pipeline(&corpus, &cfg, &tmp.path().join("b"));
    assert_eq!(a, b);
    for f in fs::read_dir(tmp.path().join("a/model")).unwrap() {
        let f = f.unwrap();
        let twin = tmp.path().join("b/model").join(f.file_name());
        assert_eq!(fs::read(f.path()).unwrap(), fs::read(twin).unwrap(), "{:?}", f.file_name());
    }
    assert_eq!(fs::read(&corpus).unwrap(), before, "input corpus was modified");

    let m = manifest(&tmp.path().join("a"));
    assert_eq!(m["command"], "evaluate");
    assert_eq!(m["exit_status"], "ok");
    let digest = m["inputs"][s(&corpus)].as_str().unwrap();
    assert_eq!(digest.len(), 64);
}

#[test]
fn augment_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (corpus, cfg) = small_setup(tmp.path());
    let out = tmp.path().join("run");
    ok(&["--out", s(&out), "--seed", "12", "gen-synth", "--genspec", s(&tmp.path().join("small_spec.json")), "--as-pool"]);
    ok(&["--config", s(&cfg), "--out", s(&out), "train", "--corpus", s(&corpus)]);
    ok(&[
        "--config", s(&cfg), "--out", s(&out), "augment", "--model", s(&out.join("model")), "--corpus", s(&corpus),
        "--pool", s(&out.join("pool.jsonl")), "--method", "knn", "--k", "3", "--ratio", "20:80",
    ]);
    let aug: Value = serde_json::from_str(&fs::read_to_string(out.join("augmentation.json")).unwrap()).unwrap();
    assert_eq!(aug.as_object().unwrap().len(), 7);
    assert_eq!(aug["mood"]["method"], "knn");
    assert_eq!(aug["mood"]["requested_ratio"], "20:80");
    assert!(out.join("model-augmented/manifest.json").is_file());

    ok(&["--out", s(&out), "baseline", "--corpus", s(&corpus)]);
    ok(&["--config", s(&cfg), "--out", s(&out), "predict", "--model", s(&out.join("model-augmented")), "--corpus", s(&corpus)]);
    ok(&["--out", s(&out), "evaluate", "--corpus", s(&corpus), "--predictions", s(&out.join("predictions.jsonl")), "--name", "knn"]);
    let table = ok(&["--out", s(&out), "report", "--eval", s(&out.join("baseline_eval.json")), "--eval", s(&out.join("eval.json"))]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 8);
    assert!(lines[0].starts_with("Model\tDomain\tPos P"));
    assert!(lines[1].starts_with("baseline\tAll\t"));
    assert!(lines[9].starts_with("knn\tAll\t"));
}

#[test]
fn agreement_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("ann.tsv");
    fs::write(&table, "item_id\tr1\tr2\tr3\na\tpositive\tpositive\tpositive\nb\tnegative\tnegative\tneutral\nc\tneutral\tneutral\tneutral\nd\tpositive\tnegative\tpositive\n").unwrap();
    let stdout = ok(&["--out", s(tmp.path()), "agreement", "--annotations", s(&table)]);
    assert!(stdout.contains("raters\t3"));
    let json: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("agreement.json")).unwrap()).unwrap();
    assert_eq!(json["pairwise"].as_array().unwrap().len(), 3);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run(&["stats", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["train"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--corpus", "x", "--embeddings", "e.tsv", "--hash-dim", "64"]).status.code(), Some(2));

    let missing = run(&["--out", s(&out), "stats", "--corpus", s(&tmp.path().join("nope.jsonl"))]);
    assert_eq!(missing.status.code(), Some(3));
    let m = manifest(&out);
    assert!(m["exit_status"].as_str().unwrap().starts_with("error (exit 3)"));

    let bad = tmp.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\":\"a\",\"text\":\"t\",\"split\":\"train\",\"annotations\":[{\"domain\":\"mood\",\"sentiment\":\"great\"}]}\n").unwrap();
    let out_bad = run(&["--out", s(&out), "stats", "--corpus", s(&bad)]);
    assert_eq!(out_bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out_bad.stderr).contains("line 1"));

    assert_eq!(run(&["--out", s(&out), "train", "--corpus", s(&bad), "--alpha", "-1"]).status.code(), Some(3));

    let cfg = tmp.path().join("typo.json");
    fs::write(&cfg, r#"{"alhpa": 0.3}"#).unwrap();
    let typo = Command::new(BIN).args(["--out", s(&out), "stats", "--corpus", s(&bad)]).env("CLIN_SENT_CONFIG", &cfg).output().unwrap();
    assert_eq!(typo.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&typo.stderr).contains("alhpa"));
}

#[test]
fn missing_domain_file_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let (corpus, cfg) = small_setup(tmp.path());
    let out = tmp.path().join("run");
    ok(&["--config", s(&cfg), "--out", s(&out), "train", "--corpus", s(&corpus)]);
    fs::remove_file(out.join("model/mood.json")).unwrap();
    let r = run(&["--config", s(&cfg), "--out", s(&out), "predict", "--model", s(&out.join("model")), "--corpus", s(&corpus)]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("mood"));
    assert!(!out.join("predictions.jsonl").exists());
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let (corpus, cfg) = small_setup(tmp.path());
    let out = tmp.path().join("run");
    ok(&["--config", s(&cfg), "--out", s(&out), "validate", "--corpus", s(&corpus), "--hash-dim", "40"]);
    let m = manifest(&out);
    assert_eq!(m["config"]["embeddings"]["hashing"]["dim"], 40);
    assert_eq!(m["config"]["embeddings"]["hashing"]["seed"], 2);
    assert_eq!(m["config"]["hyperparams"]["epochs"], 15);
    assert_eq!(m["config_file"], s(&cfg));
}
