//! Minibatch optimization of the joint objective, early stopping,
//! checkpoints and ablation runs.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Ablation, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::{context_pairs, random_walks, sample_negatives, ContextIndex, FoldRoles, Graph, WalkContext};
use crate::membership::hard_assignment;
use crate::model::{forward, prefix_rows, target_embedding, BatchPlan, Forward, ForwardOptions, ModelParams, ModelShape, ModelVars};
use crate::numerics::checkpoint;
use crate::numerics::{AdamConfig, AdamState, Tape, Tensor, Var};
use crate::objective::{
    all_pairs, build_links, classification_loss, context_loss, reg_loss, total_loss, ContextBatch, LinkSets, LossBreakdown, Reduction,
};
use crate::rng;

/// Positive contexts of every layer, indexed by target.
pub fn walk_contexts(g: &Graph, config: &TrainConfig, round: u64) -> Result<Vec<ContextIndex>> {
    let seed = rng::mix(config.seed, &[rng::tag::WALKS, round]);
    let walks = random_walks(g, config.walks_per_node, config.walk_length, seed)?;
    (1..=config.layers)
        .map(|layer| {
            let ctx = context_pairs(g, &walks, config.window_for(layer))?;
            Ok(ContextIndex::new(&ctx, g.node_count()))
        })
        .collect()
}

/// Everything a batch needs that does not depend on the parameters.
#[derive(Clone, Debug)]
pub struct BatchData {
    pub plan: BatchPlan,
    /// Per layer; `None` when no target of the batch has a context.
    pub contexts: Vec<Option<ContextBatch>>,
    /// Frozen link sets; built from the sampled assignments when `None`.
    pub links: Option<Vec<LinkSets>>,
    /// `(target rows, labels)` of labelled training targets.
    pub labels: Option<(Vec<usize>, Vec<usize>)>,
    pub link_seed: u64,
}

/// Samples the plan, positives and negatives of one batch.
pub fn prepare_batch(
    g: &Graph,
    config: &TrainConfig,
    contexts: &[ContextIndex],
    targets: &[usize],
    label_mask: Option<&[bool]>,
    batch_seed: u64,
    noisy: bool,
) -> Result<BatchData> {
    let noise_seed = noisy.then(|| rng::mix(batch_seed, &[rng::tag::GUMBEL]));
    let plan = BatchPlan::build(
        g,
        targets,
        &config.fanouts,
        &config.groups,
        config.self_loops,
        rng::mix(batch_seed, &[rng::tag::BATCH]),
        noise_seed,
    )?;
    let mut batches = Vec::with_capacity(config.layers);
    for (l, index_l) in contexts.iter().enumerate() {
        let mut positives = Vec::new();
        for &v in targets {
            let pool = index_l.contexts_of(v);
            if pool.len() <= config.positives_per_target {
                positives.extend(pool.iter().map(|&c| (v, c)));
            } else {
                let mut r = rng::derived(batch_seed, &[rng::tag::POSITIVES, l as u64, v as u64]);
                let mut picked = index::sample(&mut r, pool.len(), config.positives_per_target).into_vec();
                picked.sort_unstable();
                positives.extend(picked.into_iter().map(|i| (v, pool[i])));
            }
        }
        if positives.is_empty() {
            batches.push(None);
            continue;
        }
        let mut ctx = WalkContext {
            layer: l + 1,
            positives: Vec::with_capacity(positives.len() * config.negative_ratio),
            negatives: Vec::new(),
        };
        for _ in 0..config.negative_ratio {
            ctx.positives.extend_from_slice(&positives);
        }
        let ctx = sample_negatives(g, &ctx, rng::mix(batch_seed, &[rng::tag::NEGATIVES, l as u64]))?;
        let row_of: std::collections::HashMap<usize, usize> = targets.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut pairs: Vec<(usize, usize, bool)> = positives.iter().map(|&(v, c)| (row_of[&v], c, true)).collect();
        pairs.extend(ctx.negatives.iter().map(|&(v, c)| (row_of[&v], c, false)));
        batches.push(Some(ContextBatch::new(l + 1, &pairs)?));
    }
    let labels = match (label_mask, g.labels()) {
        (Some(mask), Some(y)) => {
            let rows: Vec<usize> = (0..targets.len()).filter(|&r| mask[targets[r]]).collect();
            let ys = rows.iter().map(|&r| y[targets[r]]).collect();
            (!rows.is_empty()).then_some((rows, ys))
        }
        _ => None,
    };
    Ok(BatchData {
        plan,
        contexts: batches,
        links: None,
        labels,
        link_seed: rng::mix(batch_seed, &[rng::tag::LINKS]),
    })
}

/// Hard assignments of the first `n` rows of a tape value.
fn hard_rows(t: &Tape, v: Var, n: usize) -> Vec<usize> {
    let z = t.value(v);
    (0..n).map(|i| hard_assignment(z.row(i))).collect()
}

/// Link sets implied by the sampled assignments of a forward pass.
pub fn links_from_forward(t: &Tape, fwd: &Forward, config: &TrainConfig, targets: usize, seed: u64) -> Result<Vec<LinkSets>> {
    let candidates = all_pairs(targets);
    (0..config.layers.saturating_sub(1))
        .map(|l| {
            let lower = hard_rows(t, fwd.z[l], targets);
            let upper = hard_rows(t, fwd.z[l + 1], targets);
            build_links(
                &lower,
                &upper,
                &candidates,
                (config.must_links, config.cannot_links),
                rng::mix(seed, &[l as u64]),
            )
        })
        .collect()
}

/// Builds the joint loss of a batch on `t`.
pub fn batch_loss(
    t: &mut Tape,
    g: &Graph,
    vars: &ModelVars,
    config: &TrainConfig,
    batch: &BatchData,
    options: ForwardOptions,
    classification_weight: f64,
) -> Result<(Var, LossBreakdown, Forward)> {
    let fwd = forward(t, g, vars, &batch.plan, options)?;
    let n = batch.plan.targets().len();
    let mut context = Vec::with_capacity(config.layers);
    for (l, cb) in batch.contexts.iter().enumerate() {
        let term = match cb {
            Some(cb) => {
                let h = prefix_rows(t, fwd.h[l + 1], n)?;
                let z = prefix_rows(t, fwd.z[l], n)?;
                let lv = &vars.layers[l];
                context_loss(t, h, z, lv.q_node, lv.q_grp, cb, config.context_mode())?
            }
            None => t.constant(Tensor::scalar(0.0)),
        };
        context.push(term);
    }
    let mut reg = Vec::new();
    if !config.disable_reg && config.layers > 1 {
        let links = match &batch.links {
            Some(l) => l.clone(),
            None => links_from_forward(t, &fwd, config, n, batch.link_seed)?,
        };
        for (l, link) in links.iter().enumerate() {
            let lower = prefix_rows(t, fwd.z[l], n)?;
            let upper = prefix_rows(t, fwd.z[l + 1], n)?;
            reg.push(reg_loss(t, link, lower, upper, config.gamma, config.beta, Reduction::Mean)?);
        }
    }
    let mut cls = None;
    if let (Some((w, b)), Some((rows, ys))) = (vars.classifier, &batch.labels) {
        if classification_weight > 0.0 {
            let emb = target_embedding(t, &fwd, n)?;
            let emb = t.gather_rows(emb, rows.clone())?;
            cls = Some((classification_loss(t, emb, w, b, ys.clone())?, classification_weight));
        }
    }
    let (total, breakdown) = total_loss(t, &context, &reg, cls)?;
    Ok((total, breakdown, fwd))
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_context: Vec<f64>,
    pub l_reg: Vec<f64>,
    pub l_cls: Option<f64>,
    pub total: f64,
    pub val_loss: f64,
    pub tau: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct StopState {
    best_val: Option<f64>,
    since_best: usize,
    stopped: bool,
}

/// Stateful training loop; [`Trainer::step_epoch`] advances one epoch.
pub struct Trainer<'g> {
    config: TrainConfig,
    graph: &'g Graph,
    shape: ModelShape,
    params: ModelParams,
    adam: AdamState,
    epoch: usize,
    contexts: Vec<ContextIndex>,
    train_mask: Option<Vec<bool>>,
    val_nodes: Vec<usize>,
    best: Option<ModelParams>,
    stop: StopState,
    history: Vec<EpochRecord>,
}

/// Output of a completed run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub config: TrainConfig,
    /// Parameters with the best validation loss (the last ones if none).
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
}

const PARAM: &str = "param.";
const BEST: &str = "best.";
const MOMENT1: &str = "adam_m.";
const MOMENT2: &str = "adam_v.";

impl<'g> Trainer<'g> {
    /// `roles` selects labelled training nodes and validation nodes; without
    /// it no classification loss is used and validation falls back to the
    /// context loss on a fixed node sample.
    pub fn new(config: TrainConfig, graph: &'g Graph, roles: Option<&FoldRoles>) -> Result<Self> {
        config.validate()?;
        if config.classification && roles.is_some() && graph.labels().is_none() {
            return Err(Error::Config("classification requested on a graph without labels".into()));
        }
        let mut shape = ModelShape::new(&config, graph);
        if roles.is_none() {
            shape.classes = None;
        }
        let params = ModelParams::init(&shape, config.seed);
        let adam = AdamState::new(
            AdamConfig {
                lr: config.lr,
                ..Default::default()
            },
            &params.tensors(),
        );
        let contexts = walk_contexts(graph, &config, 0)?;
        let (train_mask, val_nodes) = match roles {
            Some(r) => {
                let mut mask = vec![false; graph.node_count()];
                for &v in &r.train {
                    mask[v] = true;
                }
                (Some(mask), r.val.clone())
            }
            None => {
                let mut order: Vec<usize> = (0..graph.node_count()).collect();
                order.shuffle(&mut rng::derived(config.seed, &[rng::tag::SPLIT, 1]));
                order.truncate(config.batch_size.min(order.len()));
                order.sort_unstable();
                (None, order)
            }
        };
        Ok(Trainer {
            config,
            graph,
            shape,
            params,
            adam,
            epoch: 0,
            contexts,
            train_mask,
            val_nodes,
            best: None,
            stop: StopState::default(),
            history: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn adam_step(&self) -> u64 {
        self.adam.step
    }

    pub fn is_done(&self) -> bool {
        self.stop.stopped || self.epoch >= self.config.total_epochs()
    }

    fn classification_phase(&self, epoch: usize) -> bool {
        self.params.classifier.is_some() && (!self.config.two_phase || epoch >= self.config.epochs)
    }

    fn label_mask(&self) -> Option<&[bool]> {
        self.train_mask.as_deref()
    }

    /// One pass over every node in a seeded order.
    pub fn step_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.epoch;
        let started = Instant::now();
        let config = self.config.clone();
        if config.regenerate_walks && epoch > 0 {
            self.contexts = walk_contexts(self.graph, &config, epoch as u64)?;
        }
        if config.two_phase && epoch == config.epochs {
            // The validation criterion changes with the phase.
            self.stop = StopState::default();
            self.best = None;
        }
        let tau = config.tau_at(epoch);
        let options = ForwardOptions::from_config(&config, tau);
        let cls_on = self.classification_phase(epoch);
        let weight = if cls_on { config.classification_weight } else { 0.0 };

        let batches = self.epoch_batches(epoch)?;

        let mut sum = LossBreakdown::default();
        let mut cls_sum = 0.0;
        let mut cls_batches = 0usize;
        for (b, batch) in batches.iter().enumerate() {
            let mut t = Tape::new();
            let vars = self.params.register(&mut t, true);
            let (loss, breakdown, _) = batch_loss(&mut t, self.graph, &vars, &config, batch, options, weight)
                .and_then(|(l, br, f)| if br.total.is_finite() { Ok((l, br, f)) } else { Err(Error::Numeric("non-finite loss".into())) })
                .map_err(|e| diagnose(e, epoch, b, batch))?;
            let grads = t.backward(loss).map_err(|e| diagnose(e, epoch, b, batch))?;
            let zeros: Vec<Tensor> = self.params.tensors().iter().map(|p| Tensor::zeros(p.shape())).collect();
            let grad_refs: Vec<&Tensor> = vars.all.iter().zip(&zeros).map(|(&v, z)| grads.get(v).unwrap_or(z)).collect();
            let decay = self.params.decay_mask(config.weight_decay);
            self.adam
                .step(&mut self.params.tensors_mut(), &grad_refs, &decay)
                .map_err(|e| diagnose(e, epoch, b, batch))?;
            accumulate(&mut sum, &breakdown);
            if let Some(c) = breakdown.classification {
                cls_sum += c;
                cls_batches += 1;
            }
        }
        let nb = batches.len() as f64;
        let val_loss = self.validation_loss(tau, cls_on)?;
        self.track(val_loss);
        self.epoch += 1;
        let record = EpochRecord {
            epoch: self.epoch,
            l_context: sum.context.iter().map(|v| v / nb).collect(),
            l_reg: sum.reg.iter().map(|v| v / nb).collect(),
            l_cls: (cls_batches > 0).then(|| cls_sum / cls_batches as f64),
            total: sum.total / nb,
            val_loss,
            tau,
            seconds: if config.deterministic {
                0.0
            } else {
                started.elapsed().as_secs_f64()
            },
        };
        self.history.push(record.clone());
        Ok(record)
    }

    fn epoch_batches(&self, epoch: usize) -> Result<Vec<BatchData>> {
        let config = &self.config;
        let mut order: Vec<usize> = (0..self.graph.node_count()).collect();
        order.shuffle(&mut rng::derived(config.seed, &[rng::tag::EPOCH_ORDER, epoch as u64]));
        let chunks: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        chunks
            .par_iter()
            .enumerate()
            .map(|(b, targets)| {
                let seed = rng::mix(config.seed, &[rng::tag::BATCH, epoch as u64, b as u64]);
                prepare_batch(self.graph, config, &self.contexts, targets, self.label_mask(), seed, true)
            })
            .collect()
    }

    /// Mean total loss of the current parameters over the batches the next
    /// epoch would see, without updating anything.
    pub fn current_loss(&self) -> Result<f64> {
        let epoch = self.epoch;
        let tau = self.config.tau_at(epoch);
        let options = ForwardOptions::from_config(&self.config, tau);
        let weight = if self.classification_phase(epoch) { self.config.classification_weight } else { 0.0 };
        let batches = self.epoch_batches(epoch)?;
        let mut total = 0.0;
        for batch in &batches {
            let mut t = Tape::new();
            let vars = self.params.register(&mut t, false);
            let (_, breakdown, _) = batch_loss(&mut t, self.graph, &vars, &self.config, batch, options, weight)?;
            total += breakdown.total;
        }
        Ok(total / batches.len() as f64)
    }

    fn track(&mut self, val: f64) {
        let improved = self.stop.best_val.is_none_or(|b| val < b);
        if improved {
            self.stop.best_val = Some(val);
            self.stop.since_best = 0;
            self.best = Some(self.params.clone());
        } else {
            self.stop.since_best += 1;
            if self.config.patience > 0 && self.stop.since_best >= self.config.patience {
                self.stop.stopped = true;
            }
        }
    }

    /// Cross-entropy on validation nodes during the classification phase,
    /// else the summed context loss on the validation sample; noise-free.
    pub fn validation_loss(&self, tau: f64, classification: bool) -> Result<f64> {
        if self.val_nodes.is_empty() {
            return Ok(0.0);
        }
        let seed = rng::mix(self.config.seed, &[rng::tag::INFERENCE]);
        let batch = prepare_batch(self.graph, &self.config, &self.contexts, &self.val_nodes, None, seed, false)?;
        let options = ForwardOptions::from_config(&self.config, tau);
        let mut t = Tape::new();
        let vars = self.params.register(&mut t, false);
        if classification {
            if let (Some((w, b)), Some(y)) = (vars.classifier, self.graph.labels()) {
                let fwd = forward(&mut t, self.graph, &vars, &batch.plan, options)?;
                let emb = target_embedding(&mut t, &fwd, self.val_nodes.len())?;
                let labels: Vec<usize> = self.val_nodes.iter().map(|&v| y[v]).collect();
                let l = classification_loss(&mut t, emb, w, b, labels)?;
                return Ok(t.scalar(l));
            }
        }
        let (_, breakdown, _) = batch_loss(&mut t, self.graph, &vars, &self.config, &batch, options, 0.0)?;
        Ok(breakdown.context.iter().sum())
    }

    /// Trains to completion, writing one JSON line per epoch to `log`.
    pub fn run(&mut self, mut log: Option<&mut dyn Write>) -> Result<()> {
        while !self.is_done() {
            let record = self.step_epoch()?;
            log::info!("epoch {} total {:.5} val {:.5}", record.epoch, record.total, record.val_loss);
            if let Some(w) = log.as_mut() {
                writeln!(w, "{}", serde_json::to_string(&record)?)?;
            }
        }
        Ok(())
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            params: self.best.unwrap_or(self.params),
            config: self.config,
            history: self.history,
        }
    }

    /// Writes parameters, optimizer moments, the best snapshot and loop state.
    pub fn save_checkpoint(&self, dir: &Path, extra: serde_json::Value) -> Result<()> {
        let named = self.params.named();
        let mut tensors: Vec<(String, &Tensor)> = Vec::new();
        for (name, t, _) in &named {
            tensors.push((format!("{PARAM}{name}"), *t));
        }
        for ((name, _, _), m) in named.iter().zip(&self.adam.first) {
            tensors.push((format!("{MOMENT1}{name}"), m));
        }
        for ((name, _, _), v) in named.iter().zip(&self.adam.second) {
            tensors.push((format!("{MOMENT2}{name}"), v));
        }
        if let Some(best) = &self.best {
            for (name, t, _) in best.named() {
                tensors.push((format!("{BEST}{name}"), t));
            }
        }
        let metadata = serde_json::json!({
            "config": self.config,
            "config_hash": self.config.hash(),
            "epoch": self.epoch,
            "adam_step": self.adam.step,
            "rng": {
                "generator": "chacha8",
                "seed": self.config.seed,
                "keys": "streams keyed by (seed, tag, epoch, batch, layer, node)",
            },
            "stop": self.stop,
            "classes": self.shape.classes,
            "history": self.history,
            "extra": extra,
        });
        checkpoint::write_dir(dir, self.adam.step, &tensors, metadata)
    }

    /// Restores a trainer saved by [`Trainer::save_checkpoint`]. The config
    /// must hash identically and the graph must fit the saved shapes.
    pub fn resume(dir: &Path, config: TrainConfig, graph: &'g Graph, roles: Option<&FoldRoles>) -> Result<Self> {
        let ckpt = Checkpoint::load(dir)?;
        if ckpt.config_hash != config.hash() {
            return Err(Error::Incompatible(format!(
                "config hash {} does not match checkpoint {}",
                config.hash(),
                ckpt.config_hash
            )));
        }
        let mut trainer = Trainer::new(config, graph, roles)?;
        let pick = |prefix: &str| -> Vec<(String, Tensor)> {
            ckpt.tensors
                .iter()
                .filter_map(|(n, t)| n.strip_prefix(prefix).map(|s| (s.to_string(), t.clone())))
                .collect()
        };
        trainer.params = ModelParams::from_named(&trainer.shape, &pick(PARAM))?;
        let m1 = ModelParams::from_named(&trainer.shape, &pick(MOMENT1))?;
        let m2 = ModelParams::from_named(&trainer.shape, &pick(MOMENT2))?;
        trainer.adam.first = m1.tensors().into_iter().cloned().collect();
        trainer.adam.second = m2.tensors().into_iter().cloned().collect();
        let best = pick(BEST);
        trainer.best = if best.is_empty() {
            None
        } else {
            Some(ModelParams::from_named(&trainer.shape, &best)?)
        };
        let meta = &ckpt.manifest.metadata;
        trainer.adam.step = meta["adam_step"].as_u64().unwrap_or(ckpt.manifest.step);
        trainer.epoch = ckpt.epoch;
        trainer.stop = serde_json::from_value(meta["stop"].clone())?;
        trainer.history = serde_json::from_value(meta["history"].clone())?;
        if trainer.config.regenerate_walks && trainer.epoch > 0 {
            trainer.contexts = walk_contexts(graph, &trainer.config, (trainer.epoch - 1) as u64)?;
        }
        Ok(trainer)
    }
}

fn accumulate(sum: &mut LossBreakdown, b: &LossBreakdown) {
    if sum.context.is_empty() {
        sum.context = vec![0.0; b.context.len()];
        sum.reg = vec![0.0; b.reg.len()];
    }
    for (s, v) in sum.context.iter_mut().zip(&b.context) {
        *s += v;
    }
    for (s, v) in sum.reg.iter_mut().zip(&b.reg) {
        *s += v;
    }
    sum.total += b.total;
}

/// Adds the batch coordinates to numeric failures.
fn diagnose(e: Error, epoch: usize, batch: usize, data: &BatchData) -> Error {
    if !e.is_numeric() {
        return e;
    }
    let targets = data.plan.targets();
    let dump = serde_json::json!({
        "epoch": epoch,
        "batch": batch,
        "targets": targets,
        "level_sizes": data.plan.nodes.iter().map(Vec::len).collect::<Vec<_>>(),
        "context_pairs": data.contexts.iter().map(|c| c.as_ref().map_or(0, |c| c.len())).collect::<Vec<_>>(),
    });
    Error::Numeric(format!("{e}; offending batch: {dump}"))
}

/// A checkpoint directory read back from disk.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub manifest: checkpoint::Manifest,
    pub tensors: Vec<(String, Tensor)>,
    pub config: TrainConfig,
    pub config_hash: String,
    pub epoch: usize,
}

impl Checkpoint {
    pub fn load(dir: &Path) -> Result<Self> {
        let (manifest, tensors) = checkpoint::read_dir(dir)?;
        let meta = &manifest.metadata;
        let config: TrainConfig = serde_json::from_value(meta["config"].clone())
            .map_err(|e| Error::Incompatible(format!("checkpoint config: {e}")))?;
        let config_hash = meta["config_hash"]
            .as_str()
            .ok_or_else(|| Error::Incompatible("checkpoint without config hash".into()))?
            .to_string();
        if config_hash != config.hash() {
            return Err(Error::Incompatible("stored config does not match its hash".into()));
        }
        let epoch = meta["epoch"].as_u64().unwrap_or(0) as usize;
        Ok(Checkpoint {
            manifest,
            tensors,
            config,
            config_hash,
            epoch,
        })
    }

    /// Saved training parameters (the best snapshot when present).
    pub fn params(&self, g: &Graph) -> Result<ModelParams> {
        let mut shape = ModelShape::new(&self.config, g);
        shape.classes = serde_json::from_value(self.manifest.metadata["classes"].clone()).unwrap_or(None);
        let pick = |prefix: &str| -> Vec<(String, Tensor)> {
            self.tensors
                .iter()
                .filter_map(|(n, t)| n.strip_prefix(prefix).map(|s| (s.to_string(), t.clone())))
                .collect()
        };
        let best = pick(BEST);
        let chosen = if best.is_empty() { pick(PARAM) } else { best };
        ModelParams::from_named(&shape, &chosen)
    }

    pub fn extra(&self) -> &serde_json::Value {
        &self.manifest.metadata["extra"]
    }
}

/// Trains from scratch and returns the best parameters with the log.
pub fn train(config: &TrainConfig, g: &Graph, roles: Option<&FoldRoles>) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), g, roles)?;
    trainer.run(None)?;
    Ok(trainer.finish())
}

/// Trains the given single-component ablation of `config`.
pub fn run_ablation(config: &TrainConfig, which: Ablation, g: &Graph, roles: Option<&FoldRoles>) -> Result<TrainOutcome> {
    train(&config.with_ablation(which), g, roles)
}
