//! Small frozen problems used by the gradient check and tests.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::TrainConfig;
use crate::error::Result;
use crate::graph::Graph;
use crate::model::{ForwardOptions, ModelParams, ModelShape};
use crate::numerics::{grad_check, GradCheckReport, Tape, Tensor};
use crate::rng;
use crate::trainer::{batch_loss, links_from_forward, prepare_batch, walk_contexts};

/// A 20-node ring with random chords, 8 Gaussian features and 3 classes.
pub fn fixture_graph(seed: u64) -> Graph {
    let n = 20;
    let mut r = rng::derived(seed, &[rng::tag::SYNTH, 7]);
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for i in 0..n {
        for j in i + 2..n {
            if r.random::<f64>() < 0.12 {
                edges.push((i, j));
            }
        }
    }
    let data: Vec<f64> = (0..n * 8).map(|_| StandardNormal.sample(&mut r)).collect();
    let features = Tensor::new(vec![n, 8], data).expect("fixture shape");
    let labels = (0..n).map(|i| i % 3).collect();
    Graph::from_edges(n, &edges, features)
        .and_then(|g| g.with_labels(labels, 3))
        .expect("fixture graph")
}

/// `L = 2`, `K = (4, 2)`, `d = (8, 8, 8)`, two heads, small samples.
pub fn fixture_config() -> TrainConfig {
    TrainConfig {
        layers: 2,
        groups: vec![4, 2],
        dims: vec![8, 8],
        heads: 2,
        fanouts: vec![4, 4],
        walks_per_node: 4,
        walk_length: 4,
        positives_per_target: 4,
        batch_size: 20,
        ..Default::default()
    }
}

/// Unsupervised config used on the synthetic hierarchy benchmark.
pub fn synthetic_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        groups: vec![4, 2],
        dims: vec![32, 32],
        heads: 2,
        fanouts: vec![10, 10],
        walks_per_node: 10,
        batch_size: 50,
        gamma: 0.1,
        beta: 3.0,
        lr: 0.02,
        epochs,
        patience: 0,
        classification: false,
        seed,
        ..Default::default()
    }
}

/// Central-difference check of the full objective on one batch holding every
/// node of `g`. Neighbor samples, walks, negatives, Gumbel noise and the
/// must-link/cannot-link sets are drawn once and held fixed.
pub fn gradient_check(config: &TrainConfig, g: &Graph, eps: f64) -> Result<GradCheckReport> {
    config.validate()?;
    let shape = ModelShape::new(config, g);
    let params = ModelParams::init(&shape, config.seed);
    let contexts = walk_contexts(g, config, 0)?;
    let targets: Vec<usize> = (0..g.node_count()).collect();
    let mask = vec![true; g.node_count()];
    let seed = rng::mix(config.seed, &[rng::tag::BATCH]);
    let mut batch = prepare_batch(g, config, &contexts, &targets, Some(&mask), seed, true)?;
    let options = ForwardOptions::from_config(config, config.tau);
    let weight = if shape.classes.is_some() { config.classification_weight } else { 0.0 };

    let mut t = Tape::new();
    let vars = params.register(&mut t, false);
    let (_, _, fwd) = batch_loss(&mut t, g, &vars, config, &batch, options, weight)?;
    batch.links = Some(links_from_forward(&t, &fwd, config, targets.len(), batch.link_seed)?);

    let tensors: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    grad_check(&tensors, eps, |t, v| {
        let vars = params.bind(v)?;
        let (loss, _, _) = batch_loss(t, g, &vars, config, &batch, options, weight)?;
        Ok(loss)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_connected_and_labelled() {
        let g = fixture_graph(0);
        assert_eq!(g.node_count(), 20);
        assert!(g.edge_count() >= 20);
        assert!((0..20).all(|i| g.degree(i) >= 2));
        assert_eq!(g.class_count(), 3);
    }
}
