use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use hiermem::config::TrainConfig;
use hiermem::eval::{
    attention_csv, embeddings_csv, generate_synthetic, link_prediction_eval, memberships_csv, node_classification_cv, probe_cv,
    SyntheticSpec,
};
use hiermem::fixture::{fixture_graph, gradient_check};
use hiermem::graph::{load_dir, SplitAssignment};
use hiermem::model::infer;
use hiermem::trainer::{Checkpoint, Trainer};
use hiermem::{Error, Graph, Result};

use super::{Command, Export};

/// `2` for bad input, `3` for numeric failures, `1` for everything else.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) => 3,
        Error::Parse { .. }
        | Error::Reference { .. }
        | Error::Config(_)
        | Error::Dimension { .. }
        | Error::SamplingExhausted { .. }
        | Error::Contract(_)
        | Error::Incompatible(_)
        | Error::Json(_) => 2,
        Error::Io(_) => 1,
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { config, data, out, seed } => train(&config, &data, &out, seed),
        Command::EvalNode { checkpoint, data, folds, out } => eval_node(&checkpoint, &data, folds, out.as_deref()),
        Command::EvalLink { checkpoint, data, holdout, negatives, out } => eval_link(&checkpoint, &data, holdout, negatives, out.as_deref()),
        Command::Export { checkpoint, what, data, out } => export(&checkpoint, what, data.as_deref(), out.as_deref()),
        Command::Synth { spec, out } => synth(&spec, &out),
        Command::Gradcheck { config, eps, tolerance } => gradcheck(&config, eps, tolerance),
    }
}

fn read_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path)?;
    let config = TrainConfig::from_json(&text)?;
    config.validate()?;
    Ok(config)
}

fn emit(report: &Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    if let Some(path) = out {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, format!("{text}\n"))?;
    }
    println!("{text}");
    Ok(())
}

/// Accepts either a checkpoint directory or a training output directory.
fn checkpoint_dir(path: &Path) -> PathBuf {
    let nested = path.join("checkpoint");
    if nested.is_dir() {
        nested
    } else {
        path.to_path_buf()
    }
}

fn train(config_path: &Path, data: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut config = read_config(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let g = load_dir(data)?;
    fs::create_dir_all(out)?;

    // Labelled graphs hold out one fold for validation and testing.
    let split = if config.classification && g.labels().is_some() {
        let split = SplitAssignment::new(&g, 5, config.seed)?;
        split.write_csv(&g, &out.join("split.csv"))?;
        Some(split)
    } else {
        None
    };
    let roles = split.as_ref().map(|s| s.roles(0));

    let mut trainer = Trainer::new(config.clone(), &g, roles.as_ref())?;
    let mut log = std::io::BufWriter::new(fs::File::create(out.join("metrics.jsonl"))?);
    let outcome = trainer.run(Some(&mut log));
    log.flush()?;
    outcome?;

    let data_dir = fs::canonicalize(data).unwrap_or_else(|_| data.to_path_buf());
    trainer.save_checkpoint(&out.join("checkpoint"), json!({ "data": data_dir.to_string_lossy() }))?;
    let last = trainer.history().last().cloned();
    let report = json!({
        "task": "train",
        "epochs": trainer.epoch(),
        "config_hash": config.hash(),
        "final": last,
        "best_val_loss": trainer.history().iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min),
        "checkpoint": out.join("checkpoint"),
    });
    emit(&report, Some(&out.join("report.json")))
}

fn load_pair(checkpoint: &Path, data: &Path) -> Result<(Checkpoint, Graph)> {
    let ckpt = Checkpoint::load(&checkpoint_dir(checkpoint))?;
    let g = load_dir(data)?;
    Ok((ckpt, g))
}

fn eval_node(checkpoint: &Path, data: &Path, folds: usize, out: Option<&Path>) -> Result<()> {
    let (ckpt, g) = load_pair(checkpoint, data)?;
    let params = ckpt.params(&g)?;
    let config = &ckpt.config;
    let split = SplitAssignment::new(&g, folds, config.seed)?;
    let mut report = if params.classifier.is_some() {
        let mut r = node_classification_cv(config, &g, &split)?;
        r.notes.insert("protocol".into(), "retrained per fold from the checkpoint config".into());
        r
    } else {
        let inference = infer(&params, config, &g, config.seed, config.tau)?;
        let mut r = probe_cv(&inference.embeddings(), &g, &split, config.seed)?;
        r.notes.insert("protocol".into(), "logistic probe on frozen checkpoint embeddings".into());
        r
    };
    report.notes.insert("config_hash".into(), ckpt.config_hash.clone().into());
    emit(&serde_json::to_value(&report)?, out)
}

fn eval_link(checkpoint: &Path, data: &Path, holdout: f64, negatives: usize, out: Option<&Path>) -> Result<()> {
    if !(holdout > 0.0 && holdout < 1.0) {
        return Err(Error::Config(format!("holdout fraction {holdout} must lie in (0, 1)")));
    }
    let (ckpt, g) = load_pair(checkpoint, data)?;
    ckpt.params(&g)?;
    let mut report = link_prediction_eval(&ckpt.config, &g, holdout, negatives)?;
    report.notes.insert("protocol".into(), "retrained without labels on the reduced graph".into());
    report.notes.insert("config_hash".into(), ckpt.config_hash.clone().into());
    emit(&serde_json::to_value(&report)?, out)
}

fn export(checkpoint: &Path, what: Export, data: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(&checkpoint_dir(checkpoint))?;
    let data: PathBuf = match data {
        Some(d) => d.to_path_buf(),
        None => ckpt
            .extra()
            .get("data")
            .and_then(Value::as_str)
            .map(PathBuf::from)
            .ok_or_else(|| Error::Config("checkpoint records no dataset; pass --data".into()))?,
    };
    let g = load_dir(&data)?;
    let params = ckpt.params(&g)?;
    let config = &ckpt.config;
    let inference = infer(&params, config, &g, config.seed, config.tau)?;
    let csv = match what {
        Export::Embeddings => embeddings_csv(&g, &inference),
        Export::Memberships => memberships_csv(&g, &inference),
        Export::Attention => attention_csv(&g, &inference),
    };
    match out {
        Some(path) => fs::write(path, csv)?,
        None => std::io::stdout().lock().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn synth(spec_path: &Path, out: &Path) -> Result<()> {
    let spec: SyntheticSpec = serde_json::from_str(&fs::read_to_string(spec_path)?)?;
    let s = generate_synthetic(&spec)?;
    s.write_dir(out)?;
    let (expected, var) = spec.expected_edges();
    let report = json!({
        "task": "synth",
        "nodes": s.graph.node_count(),
        "edges": s.graph.edge_count(),
        "expected_edges": expected,
        "edge_std": var.sqrt(),
        "fine_groups": spec.fine_count(),
        "coarse_groups": spec.coarse_count(),
        "out": out,
    });
    emit(&report, Some(&out.join("report.json")))
}

fn gradcheck(config_path: &Path, eps: f64, tolerance: f64) -> Result<()> {
    let config = read_config(config_path)?;
    let g = fixture_graph(config.seed);
    let report = gradient_check(&config, &g, eps)?;
    let pass = report.max_relative_error < tolerance;
    emit(&json!({ "task": "gradcheck", "pass": pass, "tolerance": tolerance, "report": report }), None)?;
    if !pass {
        return Err(Error::Numeric(format!(
            "gradient check failed: relative error {:.3e} at parameter {} coordinate {}",
            report.max_relative_error, report.worst.0, report.worst.1
        )));
    }
    Ok(())
}
