//! Graph storage, loading, splits and sampling.

mod load;
mod sample;
mod split;

pub use load::{detect_source, load_dir, load_graph, DataFormat, DataSource};
pub use sample::{context_pairs, random_walks, sample_negatives, sample_neighbors, ContextIndex, WalkContext};
pub use split::{FoldRoles, SplitAssignment};

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Immutable undirected graph with dense node features.
#[derive(Clone, Debug)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    features: Tensor,
    labels: Option<Vec<usize>>,
    class_names: Vec<String>,
    original_ids: Vec<String>,
    edge_rows: usize,
}

impl Graph {
    /// Builds a graph from dense ids. Edges are symmetrized, deduplicated and
    /// stripped of self-loops.
    pub fn new(
        original_ids: Vec<String>,
        raw_edges: &[(usize, usize)],
        features: Tensor,
        labels: Option<(Vec<usize>, Vec<String>)>,
    ) -> Result<Self> {
        let n = original_ids.len();
        if features.rank() != 2 || features.rows() != n {
            return Err(Error::dim("graph features", features.shape(), &[n]));
        }
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(raw_edges.len());
        for &(a, b) in raw_edges {
            if a >= n || b >= n {
                return Err(Error::Contract(format!("edge ({a}, {b}) outside 0..{n}")));
            }
            if a != b {
                edges.push((a.min(b), a.max(b)));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        let (labels, class_names) = match labels {
            Some((labels, names)) => {
                if labels.len() != n {
                    return Err(Error::dim("graph labels", &[labels.len()], &[n]));
                }
                if let Some(bad) = labels.iter().find(|&&y| y >= names.len()) {
                    return Err(Error::Contract(format!("label {bad} >= class count {}", names.len())));
                }
                (Some(labels), names)
            }
            None => (None, Vec::new()),
        };
        Ok(Graph {
            node_count: n,
            edges,
            adjacency,
            features,
            labels,
            class_names,
            original_ids,
            edge_rows: raw_edges.len(),
        })
    }

    /// Graph with ids `"0".."n-1"` and the given edges.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)], features: Tensor) -> Result<Self> {
        let ids = (0..node_count).map(|i| i.to_string()).collect();
        Graph::new(ids, edges, features, None)
    }

    pub fn with_labels(mut self, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.len() != self.node_count || labels.iter().any(|&y| y >= class_count) {
            return Err(Error::Contract("labels do not cover the graph".into()));
        }
        self.labels = Some(labels);
        self.class_names = (0..class_count).map(|c| c.to_string()).collect();
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of edge rows read at load time, before deduplication.
    pub fn edge_rows(&self) -> usize {
        self.edge_rows
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn original_id(&self, node: usize) -> &str {
        &self.original_ids[node]
    }

    pub fn original_ids(&self) -> &[String] {
        &self.original_ids
    }

    /// Shortest-path distance if it is at most `limit`.
    pub fn distance_within(&self, from: usize, to: usize, limit: usize) -> Option<usize> {
        if from == to {
            return Some(0);
        }
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([(from, 0usize)]);
        seen[from] = true;
        while let Some((u, d)) = queue.pop_front() {
            if d == limit {
                continue;
            }
            for &v in &self.adjacency[u] {
                if v == to {
                    return Some(d + 1);
                }
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back((v, d + 1));
                }
            }
        }
        None
    }

    /// Copy of this graph without the listed undirected edges.
    pub fn without_edges(&self, removed: &[(usize, usize)]) -> Result<Graph> {
        let mut drop: Vec<(usize, usize)> = removed.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        drop.sort_unstable();
        let kept: Vec<(usize, usize)> = self
            .edges
            .iter()
            .copied()
            .filter(|e| drop.binary_search(e).is_err())
            .collect();
        let labels = self.labels.clone().map(|l| (l, self.class_names.clone()));
        Graph::new(self.original_ids.clone(), &kept, self.features.clone(), labels)
    }
}
