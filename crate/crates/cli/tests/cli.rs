use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sctc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sctc"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = sctc(dir, args);
    assert!(
        out.status.success(),
        "sctc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const MODULAR: &str = r#"
seed = 3
[dataset]
dir = "data"
[model]
dim = 8
channels = 4
layers_local = 1
layers_global = 1
history_local = 3
history_global = 3
[train]
lr = 0.01
epochs = 3
patience = 2
[synth]
kind = "modular"
[synth.modular]
entities = 6
relations = 2
timestamps = 6
"#;

fn modular_workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), MODULAR).unwrap();
    ok(dir.path(), &["synth", "--config", "run.toml", "--out", "data"]);
    dir
}

#[test]
fn ablate_prints_five_rows() {
    let dir = modular_workspace();
    let stdout = ok(dir.path(), &["ablate", "--config", "run.toml", "--out", "abl"]);
    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    let names: Vec<&str> = rows.iter().map(|r| r.split_whitespace().next().unwrap()).collect();
    assert_eq!(names, ["local", "global", "share", "late", "full"]);
    assert!(stdout.lines().next().unwrap().contains("HIT@10"));
    assert_eq!(fs::read_to_string(dir.path().join("abl/ablation.tsv")).unwrap().lines().count(), 6);
}

#[test]
fn grid_runs_every_combination_and_marks_one_best() {
    let dir = modular_workspace();
    let cfg = format!("{MODULAR}[grid]\nlr = [0.01, 0.001]\nweight_decay = [1e-5, 1e-6]\n");
    fs::write(dir.path().join("grid.toml"), cfg).unwrap();
    ok(dir.path(), &["grid-search", "--config", "grid.toml", "--out", "grid"]);
    let tsv = fs::read_to_string(dir.path().join("grid/grid.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = tsv.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 4);
    let trials = fs::read_dir(dir.path().join("grid")).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(trials, 4);
    let marked: Vec<&Vec<&str>> = rows.iter().filter(|r| r[8] == "*").collect();
    assert_eq!(marked.len(), 1);
    let best: f64 = marked[0][6].parse().unwrap();
    assert!(rows.iter().all(|r| r[6].parse::<f64>().unwrap() <= best));
}

#[test]
fn grid_without_lists_is_a_config_error() {
    let dir = modular_workspace();
    let out = sctc(dir.path(), &["grid-search", "--config", "run.toml", "--out", "g"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config grid"));
}

#[test]
fn evaluate_reproduces_best_validation_mrr() {
    let dir = modular_workspace();
    ok(dir.path(), &["train", "--config", "run.toml", "--out", "run"]);
    ok(
        dir.path(),
        &["evaluate", "--config", "run.toml", "--checkpoint", "run", "--split", "val", "--out", "ev"],
    );
    let log = fs::read_to_string(dir.path().join("run/train_log.tsv")).unwrap();
    let best = log
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(2).unwrap().parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let metrics = fs::read_to_string(dir.path().join("ev/metrics.txt")).unwrap();
    let mrr: f64 = metrics
        .lines()
        .find_map(|l| l.strip_prefix("mrr\t"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(mrr, best);
    for artifact in ["model.ckpt", "model.toml", "train_log.tsv", "resolved_config.toml", "metrics.txt", "ranks.tsv"] {
        assert!(dir.path().join("run").join(artifact).exists(), "{artifact}");
    }
}

#[test]
fn flags_override_the_file() {
    let dir = modular_workspace();
    ok(dir.path(), &["train", "--config", "run.toml", "--seed", "11", "--variant", "local", "--out", "run"]);
    let resolved = fs::read_to_string(dir.path().join("run/resolved_config.toml")).unwrap();
    assert!(resolved.contains("seed = 11"));
    assert!(resolved.contains("variant = \"local\""));
    assert!(resolved.contains("dim = 8"));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[train]\nlr = \"fast\"\n").unwrap();
    let out = sctc(dir.path(), &["train", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.lr"));
    let out = sctc(dir.path(), &["train", "--dataset", "missing"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset.dir"));
}

#[test]
fn build_dataset_output_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
[synth]
kind = "documents"
[build]
docs = "corpus/docs.tsv"
embeddings = "corpus/embeddings.bin"
events = "corpus/events.tsv"
[build.cluster]
reduced_dim = 8
"#;
    fs::write(dir.path().join("b.toml"), cfg).unwrap();
    ok(dir.path(), &["synth", "--config", "b.toml", "--out", "corpus"]);
    let stdout = ok(dir.path(), &["build-dataset", "--config", "b.toml", "--out", "ds"]);
    assert!(stdout.contains("test:"));
    let ds = sctc_core::Dataset::load(&dir.path().join("ds")).unwrap();
    ds.validate().unwrap();
    let assignment = fs::read_to_string(dir.path().join("ds/assignment.tsv")).unwrap();
    assert!(assignment.lines().any(|l| l.ends_with("\t-1")));
}

#[test]
fn credential_never_reaches_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(
        root.join("articles.jsonl"),
        r#"{"doc_id":"a","date":"2020-01-02","title":"T","body":"B"}"#,
    )
    .unwrap();
    let cfg = r#"
[extract]
articles = "articles.jsonl"
[transport]
name = "http"
[transport.http]
endpoint = "http://127.0.0.1:9/chat"
api_key_env = "SCTC_TEST_SECRET_KEY"
timeout_secs = 1
retries = 0
"#;
    fs::write(root.join("x.toml"), cfg).unwrap();
    let secret = "sk-do-not-leak-4f7a";
    let out = Command::new(env!("CARGO_BIN_EXE_sctc"))
        .args(["extract", "--config", "x.toml", "--out", "ex"])
        .current_dir(root)
        .env("SCTC_TEST_SECRET_KEY", secret)
        .env("RUST_LOG", "debug")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(root.join("ex/extraction_report.txt")).unwrap();
    assert!(report.contains("failures\t1"));
    assert!(!String::from_utf8_lossy(&out.stdout).contains(secret));
    assert!(!String::from_utf8_lossy(&out.stderr).contains(secret));
    for entry in fs::read_dir(root.join("ex")).unwrap() {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        assert!(!text.contains(secret));
    }
}
