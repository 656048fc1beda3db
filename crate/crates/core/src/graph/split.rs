use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use super::Graph;
use crate::error::{Error, Result};
use crate::rng;

/// Uniform random partition of the nodes into folds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitAssignment {
    fold_count: usize,
    folds: Vec<usize>,
}

/// Node sets used when fold `f` is the test fold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldRoles {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitAssignment {
    pub fn new(g: &Graph, fold_count: usize, seed: u64) -> Result<Self> {
        let n = g.node_count();
        if fold_count < 2 {
            return Err(Error::Config(format!("fold count {fold_count} < 2")));
        }
        if fold_count > n {
            return Err(Error::Config(format!("fold count {fold_count} exceeds {n} nodes")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::derived(seed, &[rng::tag::SPLIT]));
        let mut folds = vec![0; n];
        for (pos, &node) in order.iter().enumerate() {
            folds[node] = pos % fold_count;
        }
        Ok(SplitAssignment { fold_count, folds })
    }

    pub fn from_folds(fold_count: usize, folds: Vec<usize>) -> Result<Self> {
        if fold_count < 2 || folds.iter().any(|&f| f >= fold_count) {
            return Err(Error::Config("fold index out of range".into()));
        }
        Ok(SplitAssignment { fold_count, folds })
    }

    pub fn fold_count(&self) -> usize {
        self.fold_count
    }

    pub fn fold_of(&self, node: usize) -> usize {
        self.folds[node]
    }

    pub fn folds(&self) -> &[usize] {
        &self.folds
    }

    pub fn fold_nodes(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    /// Test = fold `f`; validation = every other node (by id) of fold
    /// `f + 1`; train = the rest.
    pub fn roles(&self, fold: usize) -> FoldRoles {
        let next = (fold + 1) % self.fold_count;
        let mut roles = FoldRoles {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        let mut next_rank = 0;
        for (node, &f) in self.folds.iter().enumerate() {
            if f == fold {
                roles.test.push(node);
            } else if f == next {
                if next_rank % 2 == 0 {
                    roles.val.push(node);
                } else {
                    roles.train.push(node);
                }
                next_rank += 1;
            } else {
                roles.train.push(node);
            }
        }
        roles
    }

    /// CSV rows `node_id,fold` using original ids.
    pub fn to_csv(&self, g: &Graph) -> String {
        let mut out = String::from("node_id,fold\n");
        for (node, f) in self.folds.iter().enumerate() {
            let _ = writeln!(out, "{},{}", g.original_id(node), f);
        }
        out
    }

    pub fn write_csv(&self, g: &Graph, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv(g))?;
        Ok(())
    }

    pub fn read_csv(g: &Graph, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let lookup: HashMap<&str, usize> = g.original_ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut folds: Vec<Option<usize>> = vec![None; g.node_count()];
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let parse = |message: &str| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: message.to_string(),
            };
            let (id, fold) = line.split_once(',').ok_or_else(|| parse("expected node_id,fold"))?;
            let node = *lookup.get(id.trim()).ok_or_else(|| Error::Reference {
                path: path.to_path_buf(),
                line: i + 1,
                id: id.to_string(),
            })?;
            folds[node] = Some(fold.trim().parse().map_err(|_| parse("bad fold index"))?);
        }
        let folds: Vec<usize> = folds
            .into_iter()
            .collect::<Option<_>>()
            .ok_or_else(|| Error::Config("split file does not cover every node".into()))?;
        let fold_count = folds.iter().max().map_or(0, |m| m + 1);
        SplitAssignment::from_folds(fold_count, folds)
    }
}
