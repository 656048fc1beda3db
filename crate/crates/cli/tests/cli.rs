use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hiermem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hiermem")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

const SPEC: &str = r#"{
  "nesting": [0, 0, 1, 1],
  "nodes_per_fine": 10,
  "p_intra_fine": 0.6,
  "p_intra_coarse": 0.1,
  "p_inter_coarse": 0.02,
  "feature_dim": 6,
  "means": [[2,0,0,0,2,0],[0,2,0,0,2,0],[0,0,2,0,0,2],[0,0,0,2,0,2]],
  "noise": 1.0,
  "seed": 4
}"#;

const CONFIG: &str = r#"{
  "groups": [4, 2], "dims": [8, 8], "heads": 2, "fanouts": [4, 4],
  "walks_per_node": 4, "walk_length": 4, "positives_per_target": 4,
  "batch_size": 20, "epochs": 3, "patience": 0, "deterministic": true
}"#;

/// Writes a spec, a config and a synthetic dataset into `dir`.
fn setup(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let spec = dir.join("spec.json");
    fs::write(&spec, SPEC).unwrap();
    let data = dir.join("data");
    let out = hiermem(&["synth", "--spec", path(&spec), "--out", path(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let config = dir.join("config.json");
    fs::write(&config, CONFIG).unwrap();
    (data, config)
}

#[test]
fn synth_writes_a_loadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, SPEC).unwrap();
    let data = dir.path().join("data");
    let out = hiermem(&["synth", "--spec", path(&spec), "--out", path(&data)]);
    assert!(out.status.success());
    let report = json(&out);
    assert_eq!(report["nodes"], 40);
    for f in ["edges.csv", "features.csv", "labels.csv", "planted.csv", "report.json"] {
        assert!(data.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn train_eval_and_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (data, config) = setup(dir.path());
    let run = dir.path().join("run");
    let out = hiermem(&["train", "--config", path(&config), "--data", path(&data), "--out", path(&run), "--seed", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["epochs"], 3);
    let log = fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(run.join("split.csv").is_file());

    let node = hiermem(&["eval-node", "--checkpoint", path(&run), "--data", path(&data), "--folds", "2"]);
    assert!(node.status.success(), "{}", String::from_utf8_lossy(&node.stderr));
    let report = json(&node);
    assert_eq!(report["folds"].as_array().unwrap().len(), 2);
    let acc = report["mean"]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let link = hiermem(&["eval-link", "--checkpoint", path(&run), "--data", path(&data), "--holdout", "0.1", "--negatives", "5"]);
    assert!(link.status.success(), "{}", String::from_utf8_lossy(&link.stderr));
    let auc = json(&link)["mean"]["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));

    let ckpt = run.join("checkpoint");
    let emb = hiermem(&["export", "--checkpoint", path(&ckpt), "--what", "embeddings"]);
    assert!(emb.status.success(), "{}", String::from_utf8_lossy(&emb.stderr));
    let text = String::from_utf8(emb.stdout.clone()).unwrap();
    assert_eq!(text.lines().count(), 41);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 17);
    let again = hiermem(&["export", "--checkpoint", path(&ckpt), "--what", "embeddings"]);
    assert_eq!(emb.stdout, again.stdout);

    let target = dir.path().join("m.csv");
    let mem = hiermem(&["export", "--checkpoint", path(&ckpt), "--what", "memberships", "--data", path(&data), "--out", path(&target)]);
    assert!(mem.status.success());
    assert_eq!(fs::read_to_string(&target).unwrap().lines().count(), 81);
    let att = hiermem(&["export", "--checkpoint", path(&ckpt), "--what", "attention"]);
    assert!(att.status.success());
    assert!(String::from_utf8(att.stdout).unwrap().starts_with("layer,target,neighbor,head,alpha,lambda"));
}

#[test]
fn identical_runs_write_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let (data, config) = setup(dir.path());
    let logs: Vec<String> = ["a", "b"]
        .iter()
        .map(|name| {
            let run = dir.path().join(name);
            let out = hiermem(&["train", "--config", path(&config), "--data", path(&data), "--out", path(&run)]);
            assert!(out.status.success());
            fs::read_to_string(run.join("metrics.jsonl")).unwrap()
        })
        .collect();
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn gradcheck_passes_on_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    fs::write(&config, CONFIG).unwrap();
    let out = hiermem(&["gradcheck", "--config", path(&config)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    assert_eq!(report["pass"], true);
    assert!(report["report"]["max_relative_error"].as_f64().unwrap() < 1e-4);
}

#[test]
fn failed_gradcheck_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    fs::write(&config, CONFIG).unwrap();
    // A huge step makes central differences useless.
    let out = hiermem(&["gradcheck", "--config", path(&config), "--eps", "10"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = setup(dir.path());
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"groups": [2, 4]}"#).unwrap();
    let out = hiermem(&["train", "--config", path(&bad), "--data", path(&data), "--out", path(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("decrease"));

    fs::write(&bad, r#"{"no_such_key": 1}"#).unwrap();
    let out = hiermem(&["gradcheck", "--config", path(&bad)]);
    assert_eq!(out.status.code(), Some(2));

    let spec = dir.path().join("spec.json");
    fs::write(&spec, SPEC.replace("0.6", "0.05")).unwrap();
    let out = hiermem(&["synth", "--spec", path(&spec), "--out", path(&dir.path().join("y"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mismatched_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (data, config) = setup(dir.path());
    let run = dir.path().join("run");
    assert!(hiermem(&["train", "--config", path(&config), "--data", path(&data), "--out", path(&run)]).status.success());

    let other = dir.path().join("other");
    fs::create_dir_all(&other).unwrap();
    fs::write(other.join("edges.csv"), "a,b\nb,c\n").unwrap();
    let out = hiermem(&["export", "--checkpoint", path(&run), "--what", "embeddings", "--data", path(&other)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
