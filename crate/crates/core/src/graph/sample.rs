use rand::seq::index;
use rand::Rng;

use super::Graph;
use crate::error::{Error, Result};
use crate::rng;

/// Skip-gram training pairs for one layer's neighborhood scope.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WalkContext {
    pub layer: usize,
    /// `(target, context)`; duplicates are kept so frequent pairs weigh more.
    pub positives: Vec<(usize, usize)>,
    /// `(target, negative)`, grouped by ascending target.
    pub negatives: Vec<(usize, usize)>,
}

impl WalkContext {
    pub fn positives_of(&self, target: usize) -> impl Iterator<Item = usize> + '_ {
        self.positives.iter().filter(move |p| p.0 == target).map(|p| p.1)
    }

    pub fn negatives_of(&self, target: usize) -> impl Iterator<Item = usize> + '_ {
        self.negatives.iter().filter(move |p| p.0 == target).map(|p| p.1)
    }
}

fn check_node(g: &Graph, node: usize) -> Result<()> {
    if node >= g.node_count() {
        return Err(Error::Contract(format!("node {node} outside 0..{}", g.node_count())));
    }
    Ok(())
}

/// Fixed-size neighbor sample: without replacement when the degree allows,
/// with replacement otherwise. Isolated nodes return themselves `count` times.
pub fn sample_neighbors(g: &Graph, node: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    check_node(g, node)?;
    let adj = g.neighbors(node);
    if adj.is_empty() {
        return Ok(vec![node; count]);
    }
    let mut rng = rng::stream(seed);
    if adj.len() >= count {
        Ok(index::sample(&mut rng, adj.len(), count).into_iter().map(|i| adj[i]).collect())
    } else {
        Ok((0..count).map(|_| adj[rng.random_range(0..adj.len())]).collect())
    }
}

/// Uniform random walks, `walks_per_node` rounds over every node. A walk
/// stops early at a node without neighbors.
pub fn random_walks(g: &Graph, walks_per_node: usize, walk_length: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if walk_length < 2 {
        return Err(Error::Config(format!("walk length {walk_length} < 2")));
    }
    let n = g.node_count();
    let mut walks = Vec::with_capacity(walks_per_node * n);
    for round in 0..walks_per_node {
        for start in 0..n {
            let mut rng = rng::derived(seed, &[rng::tag::WALKS, round as u64, start as u64]);
            let mut walk = Vec::with_capacity(walk_length);
            walk.push(start);
            while walk.len() < walk_length {
                let adj = g.neighbors(*walk.last().expect("non-empty walk"));
                if adj.is_empty() {
                    break;
                }
                walk.push(adj[rng.random_range(0..adj.len())]);
            }
            walks.push(walk);
        }
    }
    Ok(walks)
}

/// Co-occurrence pairs within a window of `layer` steps.
///
/// Nodes `k` steps apart on a walk are at most `k` hops apart in the graph,
/// so every emitted pair already lies inside the layer's scope; the only
/// pairs dropped are a node paired with itself.
pub fn context_pairs(g: &Graph, walks: &[Vec<usize>], layer: usize) -> Result<WalkContext> {
    if layer == 0 {
        return Err(Error::Config("layers are numbered from 1".into()));
    }
    let mut positives = Vec::new();
    for walk in walks {
        for (p, &a) in walk.iter().enumerate() {
            check_node(g, a)?;
            for &b in walk.iter().skip(p + 1).take(layer) {
                if a != b {
                    positives.push((a, b));
                    positives.push((b, a));
                }
            }
        }
    }
    Ok(WalkContext {
        layer,
        positives,
        negatives: Vec::new(),
    })
}

/// Draws, for each target, as many non-neighbors as it has positives.
pub fn sample_negatives(g: &Graph, ctx: &WalkContext, seed: u64) -> Result<WalkContext> {
    if ctx.positives.is_empty() {
        return Err(Error::Contract("no positive pairs to match with negatives".into()));
    }
    let n = g.node_count();
    let mut counts = vec![0usize; n];
    for &(t, _) in &ctx.positives {
        check_node(g, t)?;
        counts[t] += 1;
    }
    let mut negatives = Vec::with_capacity(ctx.positives.len());
    for (target, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let available = n - 1 - g.degree(target);
        if available == 0 {
            return Err(Error::SamplingExhausted { node: target });
        }
        let mut rng = rng::derived(seed, &[rng::tag::NEGATIVES, target as u64]);
        let valid = |v: usize| v != target && !g.is_adjacent(target, v);
        if available * 4 >= n {
            let mut drawn = 0;
            while drawn < count {
                let v = rng.random_range(0..n);
                if valid(v) {
                    negatives.push((target, v));
                    drawn += 1;
                }
            }
        } else {
            let pool: Vec<usize> = (0..n).filter(|&v| valid(v)).collect();
            for _ in 0..count {
                negatives.push((target, pool[rng.random_range(0..pool.len())]));
            }
        }
    }
    Ok(WalkContext {
        layer: ctx.layer,
        positives: ctx.positives.clone(),
        negatives,
    })
}

/// Positive contexts grouped by target (CSR layout).
#[derive(Clone, Debug)]
pub struct ContextIndex {
    offsets: Vec<usize>,
    contexts: Vec<usize>,
}

impl ContextIndex {
    pub fn new(ctx: &WalkContext, node_count: usize) -> Self {
        let mut offsets = vec![0usize; node_count + 1];
        for &(t, _) in &ctx.positives {
            offsets[t + 1] += 1;
        }
        for i in 0..node_count {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut contexts = vec![0; ctx.positives.len()];
        for &(t, c) in &ctx.positives {
            contexts[fill[t]] = c;
            fill[t] += 1;
        }
        ContextIndex { offsets, contexts }
    }

    pub fn contexts_of(&self, target: usize) -> &[usize] {
        &self.contexts[self.offsets[target]..self.offsets[target + 1]]
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }
}
