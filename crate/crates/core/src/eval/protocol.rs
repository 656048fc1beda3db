use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{link_prediction_metrics, mean_std, nmi, node_classification_metrics, CandidateSet};
use super::synthetic::SyntheticGraph;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::graph::{Graph, SplitAssignment};
use crate::membership::hard_assignment;
use crate::model::{infer, Inference, ModelParams};
use crate::numerics::{AdamConfig, AdamState, Tape, Tensor};
use crate::objective::classification_loss;
use crate::rng;
use crate::trainer::train;

/// Per-fold metrics with their mean and population std.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub folds: Vec<BTreeMap<String, f64>>,
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
    #[serde(default)]
    pub notes: BTreeMap<String, serde_json::Value>,
}

impl EvalReport {
    pub fn new(task: &str, folds: Vec<BTreeMap<String, f64>>) -> Self {
        let mut mean = BTreeMap::new();
        let mut std = BTreeMap::new();
        if let Some(first) = folds.first() {
            for key in first.keys() {
                let vals: Vec<f64> = folds.iter().filter_map(|f| f.get(key).copied()).collect();
                let (m, s) = mean_std(&vals);
                mean.insert(key.clone(), m);
                std.insert(key.clone(), s);
            }
        }
        EvalReport {
            task: task.to_string(),
            folds,
            mean,
            std,
            notes: BTreeMap::new(),
        }
    }

    pub fn metric(&self, name: &str) -> Vec<f64> {
        self.folds.iter().filter_map(|f| f.get(name).copied()).collect()
    }
}

/// Argmax of the trained classifier head over the concatenated embeddings.
pub fn classifier_predictions(params: &ModelParams, inference: &Inference, nodes: &[usize]) -> Result<Vec<usize>> {
    let head = params
        .classifier
        .as_ref()
        .ok_or_else(|| Error::Incompatible("model has no classifier head".into()))?;
    let emb = inference.embeddings();
    Ok(nodes
        .iter()
        .map(|&v| {
            let x = emb.row(v);
            let scores: Vec<f64> = (0..head.b.len())
                .map(|c| head.b.data()[c] + x.iter().enumerate().map(|(k, xk)| xk * head.w.get(k, c)).sum::<f64>())
                .collect();
            hard_assignment(&scores)
        })
        .collect())
}

/// Multinomial logistic regression fitted on frozen embeddings, used when a
/// model was trained without labels.
pub fn fit_probe(emb: &Tensor, train_nodes: &[usize], labels: &[usize], classes: usize, seed: u64) -> Result<(Tensor, Tensor)> {
    let d = emb.cols();
    let mut r = rng::derived(seed, &[rng::tag::INIT, 1]);
    let mut w = Tensor::glorot_uniform(&[d, classes], &mut r);
    let mut b = Tensor::zeros(&[classes]);
    let x = emb.gather_rows(train_nodes);
    let y: Vec<usize> = train_nodes.iter().map(|&v| labels[v]).collect();
    let mut adam = AdamState::new(
        AdamConfig {
            lr: 0.01,
            ..Default::default()
        },
        &[&w, &b],
    );
    for _ in 0..300 {
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let wv = t.param(w.clone());
        let bv = t.param(b.clone());
        let loss = classification_loss(&mut t, xv, wv, bv, y.clone())?;
        let g = t.backward(loss)?;
        let (gw, gb) = (g.get(wv).cloned().unwrap(), g.get(bv).cloned().unwrap());
        adam.step(&mut [&mut w, &mut b], &[&gw, &gb], &[1e-4, 0.0])?;
    }
    Ok((w, b))
}

fn probe_predictions(w: &Tensor, b: &Tensor, emb: &Tensor, nodes: &[usize]) -> Vec<usize> {
    nodes
        .iter()
        .map(|&v| {
            let x = emb.row(v);
            let scores: Vec<f64> = (0..b.len())
                .map(|c| b.data()[c] + x.iter().enumerate().map(|(k, xk)| xk * w.get(k, c)).sum::<f64>())
                .collect();
            hard_assignment(&scores)
        })
        .collect()
}

fn classification_row(pred: &[usize], gold: &[usize], classes: usize) -> Result<BTreeMap<String, f64>> {
    let m = node_classification_metrics(pred, gold, classes)?;
    Ok(BTreeMap::from([
        ("accuracy".to_string(), m.accuracy),
        ("micro_f1".to_string(), m.micro_f1),
        ("macro_f1".to_string(), m.macro_f1),
    ]))
}

/// K-fold node classification: each fold trains a fresh model on its
/// training nodes (classification head jointly when enabled) and scores the
/// held-out fold. Folds run in parallel.
pub fn node_classification_cv(config: &TrainConfig, g: &Graph, split: &SplitAssignment) -> Result<EvalReport> {
    let labels = g
        .labels()
        .ok_or_else(|| Error::Config("node classification needs labels".into()))?;
    let classes = g.class_count();
    let folds: Vec<BTreeMap<String, f64>> = (0..split.fold_count())
        .into_par_iter()
        .map(|f| {
            let roles = split.roles(f);
            let outcome = train(config, g, Some(&roles))?;
            let inference = infer(&outcome.params, config, g, config.seed, config.tau)?;
            let pred = if outcome.params.classifier.is_some() {
                classifier_predictions(&outcome.params, &inference, &roles.test)?
            } else {
                let emb = inference.embeddings();
                let (w, b) = fit_probe(&emb, &roles.train, labels, classes, config.seed)?;
                probe_predictions(&w, &b, &emb, &roles.test)
            };
            let gold: Vec<usize> = roles.test.iter().map(|&v| labels[v]).collect();
            classification_row(&pred, &gold, classes)
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport::new("node_classification", folds))
}

/// Probes frozen embeddings fold by fold; no retraining.
pub fn probe_cv(emb: &Tensor, g: &Graph, split: &SplitAssignment, seed: u64) -> Result<EvalReport> {
    let labels = g
        .labels()
        .ok_or_else(|| Error::Config("node classification needs labels".into()))?;
    let classes = g.class_count();
    let folds: Vec<BTreeMap<String, f64>> = (0..split.fold_count())
        .into_par_iter()
        .map(|f| {
            let roles = split.roles(f);
            let (w, b) = fit_probe(emb, &roles.train, labels, classes, seed)?;
            let pred = probe_predictions(&w, &b, emb, &roles.test);
            let gold: Vec<usize> = roles.test.iter().map(|&v| labels[v]).collect();
            classification_row(&pred, &gold, classes)
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport::new("node_classification", folds))
}

/// Held-out edges and their sampled non-neighbors.
#[derive(Clone, Debug)]
pub struct LinkSplit {
    pub train_graph: Graph,
    pub held_out: Vec<(usize, usize)>,
    /// `negatives[i]` are non-neighbors of `held_out[i].0` in the full graph.
    pub negatives: Vec<Vec<usize>>,
}

/// Removes a `fraction` of the edges and draws `negatives` candidates per
/// held-out edge among nodes not adjacent to its source.
pub fn split_links(g: &Graph, fraction: f64, negatives: usize, seed: u64) -> Result<LinkSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("holdout fraction {fraction} outside (0, 1)")));
    }
    let m = g.edge_count();
    let k = ((m as f64) * fraction).round().max(1.0) as usize;
    if k >= m {
        return Err(Error::Config("holdout would remove every edge".into()));
    }
    let mut r = rng::derived(seed, &[rng::tag::HOLDOUT]);
    let mut picked = index::sample(&mut r, m, k).into_vec();
    picked.sort_unstable();
    let held_out: Vec<(usize, usize)> = picked.iter().map(|&i| g.edges()[i]).collect();
    let n = g.node_count();
    let negs = held_out
        .iter()
        .enumerate()
        .map(|(i, &(u, _))| {
            let pool: Vec<usize> = (0..n).filter(|&w| w != u && !g.is_adjacent(u, w)).collect();
            if pool.is_empty() {
                return Err(Error::SamplingExhausted { node: u });
            }
            let mut r = rng::derived(seed, &[rng::tag::CANDIDATES, i as u64]);
            Ok(if pool.len() <= negatives {
                pool
            } else {
                let mut idx = index::sample(&mut r, pool.len(), negatives).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|j| pool[j]).collect()
            })
        })
        .collect::<Result<_>>()?;
    Ok(LinkSplit {
        train_graph: g.without_edges(&held_out)?,
        held_out,
        negatives: negs,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scores held-out edges with dot products of first-layer embeddings.
pub fn score_links(first_layer: &Tensor, split: &LinkSplit) -> Vec<CandidateSet> {
    split
        .held_out
        .iter()
        .zip(&split.negatives)
        .map(|(&(u, v), negs)| CandidateSet {
            positive: dot(first_layer.row(u), first_layer.row(v)),
            negatives: negs.iter().map(|&w| dot(first_layer.row(u), first_layer.row(w))).collect(),
        })
        .collect()
}

/// Trains without labels on the reduced graph and ranks held-out edges.
pub fn link_prediction_eval(config: &TrainConfig, g: &Graph, fraction: f64, negatives: usize) -> Result<EvalReport> {
    let split = split_links(g, fraction, negatives, config.seed)?;
    let mut unsupervised = config.clone();
    unsupervised.classification = false;
    let outcome = train(&unsupervised, &split.train_graph, None)?;
    let inference = infer(&outcome.params, &unsupervised, &split.train_graph, unsupervised.seed, unsupervised.tau)?;
    let m = link_prediction_metrics(&score_links(&inference.states[0], &split))?;
    let mut report = EvalReport::new(
        "link_prediction",
        vec![BTreeMap::from([("auc".to_string(), m.auc), ("mrr".to_string(), m.mrr)])],
    );
    report.notes.insert("held_out_edges".into(), split.held_out.len().into());
    report.notes.insert("negatives_per_edge".into(), negatives.into());
    Ok(report)
}

/// NMI of the first and last layer's hard assignments against planted
/// fine and coarse partitions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyScores {
    pub first_vs_fine: f64,
    pub last_vs_fine: f64,
    pub first_vs_coarse: f64,
    pub last_vs_coarse: f64,
}

impl HierarchyScores {
    /// Finer partitions sit lower: the first layer tracks fine groups at
    /// least as well as the last, and the last tracks coarse groups at least
    /// as well as the first.
    pub fn aligned(&self) -> bool {
        self.first_vs_fine >= self.last_vs_fine && self.last_vs_coarse >= self.first_vs_coarse
    }

    pub fn score(inference: &Inference, fine: &[usize], coarse: &[usize]) -> Result<Self> {
        let (first, last) = match (inference.pi.first(), inference.pi.last()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Contract("inference holds no layers".into())),
        };
        let hard = |pi: &Tensor| (0..pi.rows()).map(|i| hard_assignment(pi.row(i))).collect::<Vec<_>>();
        let (h1, h2) = (hard(first), hard(last));
        Ok(HierarchyScores {
            first_vs_fine: nmi(&h1, fine)?,
            last_vs_fine: nmi(&h2, fine)?,
            first_vs_coarse: nmi(&h1, coarse)?,
            last_vs_coarse: nmi(&h2, coarse)?,
        })
    }
}

/// Trains without labels on a planted hierarchy and scores what was found.
pub fn hierarchy_recovery(config: &TrainConfig, synthetic: &SyntheticGraph) -> Result<HierarchyScores> {
    let mut unsupervised = config.clone();
    unsupervised.classification = false;
    let outcome = train(&unsupervised, &synthetic.graph, None)?;
    let inference = infer(&outcome.params, &unsupervised, &synthetic.graph, unsupervised.seed, unsupervised.tau)?;
    HierarchyScores::score(&inference, &synthetic.fine, &synthetic.coarse)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(n: usize) -> Graph {
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::from_edges(n, &edges, Tensor::identity(n)).unwrap()
    }

    #[test]
    fn link_split_holds_out_and_avoids_neighbors() {
        let g = path_graph(30);
        let s = split_links(&g, 0.1, 5, 4).unwrap();
        assert_eq!(s.held_out.len(), 3);
        assert_eq!(s.train_graph.edge_count(), 26);
        for (&(u, v), negs) in s.held_out.iter().zip(&s.negatives) {
            assert!(!s.train_graph.is_adjacent(u, v));
            assert_eq!(negs.len(), 5);
            assert!(negs.iter().all(|&w| w != u && !g.is_adjacent(u, w)));
        }
        let again = split_links(&g, 0.1, 5, 4).unwrap();
        assert_eq!((s.held_out, s.negatives), (again.held_out, again.negatives));
        assert!(split_links(&g, 0.0, 5, 4).is_err());
    }

    #[test]
    fn probe_separates_separable_embeddings() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![if i % 2 == 0 { 2.0 } else { -2.0 }, 1.0]).collect();
        let emb = Tensor::from_rows(&rows).unwrap();
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let train: Vec<usize> = (0..30).collect();
        let (w, b) = fit_probe(&emb, &train, &labels, 2, 0).unwrap();
        let test: Vec<usize> = (30..40).collect();
        let pred = probe_predictions(&w, &b, &emb, &test);
        assert_eq!(pred, test.iter().map(|&v| labels[v]).collect::<Vec<_>>());
    }

    #[test]
    fn report_summarizes_folds() {
        let folds = vec![
            BTreeMap::from([("accuracy".to_string(), 0.5)]),
            BTreeMap::from([("accuracy".to_string(), 1.0)]),
        ];
        let r = EvalReport::new("x", folds);
        assert_eq!(r.mean["accuracy"], 0.75);
        assert_eq!(r.std["accuracy"], 0.25);
    }
}
