use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::Tensor;
use crate::rng;

/// Nested stochastic block model with Gaussian feature bumps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// `nesting[f]` is the coarse group of fine group `f`.
    pub nesting: Vec<usize>,
    pub nodes_per_fine: usize,
    pub p_intra_fine: f64,
    pub p_intra_coarse: f64,
    pub p_inter_coarse: f64,
    pub feature_dim: usize,
    /// One mean per fine group, `feature_dim` wide.
    pub means: Vec<Vec<f64>>,
    pub noise: f64,
    pub seed: u64,
}

/// A generated graph with its planted partitions.
#[derive(Clone, Debug)]
pub struct SyntheticGraph {
    /// Labelled with the fine groups.
    pub graph: Graph,
    pub fine: Vec<usize>,
    pub coarse: Vec<usize>,
}

impl SyntheticSpec {
    /// `coarse x fine_per_coarse` blocks. Features have one axis per fine and
    /// per coarse group; a node's mean is `separation` (in noise units) along
    /// both of its axes, so within-coarse and across-coarse means differ.
    pub fn nested(coarse: usize, fine_per_coarse: usize, nodes_per_fine: usize, p: [f64; 3], separation: f64, seed: u64) -> Self {
        let fine = coarse * fine_per_coarse;
        let nesting: Vec<usize> = (0..fine).map(|f| f / fine_per_coarse).collect();
        let dim = fine + coarse;
        let means = (0..fine)
            .map(|f| {
                let mut m = vec![0.0; dim];
                m[f] = separation;
                m[fine + nesting[f]] = separation;
                m
            })
            .collect();
        SyntheticSpec {
            nesting,
            nodes_per_fine,
            p_intra_fine: p[0],
            p_intra_coarse: p[1],
            p_inter_coarse: p[2],
            feature_dim: dim,
            means,
            noise: 1.0,
            seed,
        }
    }

    /// The hierarchy benchmark: 2 coarse groups of 2 fine groups, 50 nodes
    /// each, `p = 0.3 / 0.05 / 0.005`, means 2 noise units apart.
    pub fn benchmark(seed: u64) -> Self {
        SyntheticSpec::nested(2, 2, 50, [0.3, 0.05, 0.005], 2.0, seed)
    }

    pub fn fine_count(&self) -> usize {
        self.nesting.len()
    }

    pub fn coarse_count(&self) -> usize {
        self.nesting.iter().max().map_or(0, |m| m + 1)
    }

    pub fn node_count(&self) -> usize {
        self.fine_count() * self.nodes_per_fine
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.nesting.is_empty() || self.nodes_per_fine == 0 {
            return fail("empty synthetic graph".into());
        }
        let coarse = self.coarse_count();
        if (0..coarse).any(|c| !self.nesting.contains(&c)) {
            return fail("nesting map leaves a coarse group empty".into());
        }
        for p in [self.p_intra_fine, self.p_intra_coarse, self.p_inter_coarse] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("edge probability {p} outside [0, 1]"));
            }
        }
        if !(self.p_intra_fine > self.p_intra_coarse && self.p_intra_coarse > self.p_inter_coarse) {
            return fail("edge probabilities must decrease from fine to coarse to inter-coarse".into());
        }
        if self.feature_dim == 0 {
            return fail("feature dimension must be positive".into());
        }
        if self.means.len() != self.fine_count() || self.means.iter().any(|m| m.len() != self.feature_dim) {
            return fail("need one feature mean of width feature_dim per fine group".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return fail(format!("noise scale {} must be non-negative", self.noise));
        }
        Ok(())
    }

    /// Edge probability between nodes of fine groups `a` and `b`.
    pub fn probability(&self, a: usize, b: usize) -> f64 {
        if a == b {
            self.p_intra_fine
        } else if self.nesting[a] == self.nesting[b] {
            self.p_intra_coarse
        } else {
            self.p_inter_coarse
        }
    }

    /// `(expected edges, binomial variance)` over all node pairs.
    pub fn expected_edges(&self) -> (f64, f64) {
        let n = self.nodes_per_fine as f64;
        let f = self.fine_count();
        let mut mean = 0.0;
        let mut var = 0.0;
        for a in 0..f {
            for b in a..f {
                let pairs = if a == b { n * (n - 1.0) / 2.0 } else { n * n };
                let p = self.probability(a, b);
                mean += pairs * p;
                var += pairs * p * (1.0 - p);
            }
        }
        (mean, var)
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticGraph> {
    spec.validate()?;
    let n = spec.node_count();
    let fine: Vec<usize> = (0..n).map(|i| i / spec.nodes_per_fine).collect();
    let coarse: Vec<usize> = fine.iter().map(|&f| spec.nesting[f]).collect();
    let mut edge_rng = rng::derived(spec.seed, &[rng::tag::SYNTH, 0]);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if edge_rng.random::<f64>() < spec.probability(fine[i], fine[j]) {
                edges.push((i, j));
            }
        }
    }
    let mut feat_rng = rng::derived(spec.seed, &[rng::tag::SYNTH, 1]);
    let mut data = Vec::with_capacity(n * spec.feature_dim);
    for &f in &fine {
        for &m in &spec.means[f] {
            let e: f64 = StandardNormal.sample(&mut feat_rng);
            data.push(m + spec.noise * e);
        }
    }
    let features = Tensor::new(vec![n, spec.feature_dim], data)?;
    let graph = Graph::from_edges(n, &edges, features)?.with_labels(fine.clone(), spec.fine_count())?;
    Ok(SyntheticGraph { graph, fine, coarse })
}

impl SyntheticGraph {
    /// Writes `edges.csv`, `features.csv`, `labels.csv` (fine groups) and
    /// `planted.csv` (`id,fine,coarse`) into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let g = &self.graph;
        let mut edges = String::new();
        for &(a, b) in g.edges() {
            writeln!(edges, "{},{}", g.original_id(a), g.original_id(b)).unwrap();
        }
        let mut features = String::new();
        let mut labels = String::new();
        let mut planted = String::from("id,fine,coarse\n");
        for i in 0..g.node_count() {
            let id = g.original_id(i);
            write!(features, "{id}").unwrap();
            for v in g.features().row(i) {
                write!(features, ",{v}").unwrap();
            }
            features.push('\n');
            writeln!(labels, "{id},fine{}", self.fine[i]).unwrap();
            writeln!(planted, "{id},{},{}", self.fine[i], self.coarse[i]).unwrap();
        }
        std::fs::write(dir.join("edges.csv"), edges)?;
        std::fs::write(dir.join("features.csv"), features)?;
        std::fs::write(dir.join("labels.csv"), labels)?;
        std::fs::write(dir.join("planted.csv"), planted)?;
        Ok(())
    }
}
