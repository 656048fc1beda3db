//! Loss terms: membership-conditioned skip-gram context loss, the inter-layer
//! must-link / cannot-link regularizer, the classification head and their sum.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::rng;

/// How the context vector `Q[j, k]` of node `j` under group `k` is stored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextForm {
    /// `Q[j, k] = q_node[j] + q_grp[k]`, with `q_grp` of shape `K x d`.
    #[default]
    Additive,
    /// `Q[j, k] = q_node[j] + q_grp[j, k]`, with `q_grp` of shape `|V| x (K d)`
    /// holding one block of `d` columns per group.
    Joint,
}

/// Context vectors of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextTable {
    pub layer: usize,
    /// `|V| x d`.
    pub q_node: Tensor,
    /// `K x d` or `|V| x (K d)`, see [`ContextForm`].
    pub q_grp: Tensor,
}

/// Which part of the context table a loss reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContextMode {
    Membership(ContextForm),
    /// Drops the group term, leaving one vector per context node.
    Agnostic,
}

/// Scored pairs of one layer in a batch, with the normalizing weights that
/// turn a weighted sum into "mean over targets of (mean positive term + mean
/// negative term)".
#[derive(Clone, Debug, PartialEq)]
pub struct ContextBatch {
    pub layer: usize,
    /// Row of the target in the batch's state matrix, per pair.
    pub rows: Arc<[usize]>,
    /// Context node id, per pair.
    pub contexts: Arc<[usize]>,
    /// `+1` for positives, `-1` for negatives.
    pub signs: Tensor,
    pub weights: Tensor,
}

impl ContextBatch {
    /// `pairs` are `(target row, context node, is_positive)`.
    pub fn new(layer: usize, pairs: &[(usize, usize, bool)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Contract(format!("layer {layer} has no context pairs")));
        }
        let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for &(row, _, positive) in pairs {
            let c = counts.entry(row).or_default();
            if positive {
                c.0 += 1;
            } else {
                c.1 += 1;
            }
        }
        let targets = counts.len() as f64;
        let mut weights = Vec::with_capacity(pairs.len());
        let mut signs = Vec::with_capacity(pairs.len());
        for &(row, _, positive) in pairs {
            let (p, n) = counts[&row];
            let count = if positive { p } else { n };
            weights.push(1.0 / (count as f64 * targets));
            signs.push(if positive { 1.0 } else { -1.0 });
        }
        Ok(ContextBatch {
            layer,
            rows: pairs.iter().map(|p| p.0).collect(),
            contexts: pairs.iter().map(|p| p.1).collect(),
            signs: Tensor::vector(signs),
            weights: Tensor::vector(weights),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub const LOGIT_CLAMP: f64 = 30.0;

/// Negative-sampling skip-gram loss of one layer.
///
/// `h` and `z` hold the batch's target rows (states after the layer and the
/// assignments that conditioned it). Relaxed `z` mixes the group vectors.
pub fn context_loss(t: &mut Tape, h: Var, z: Var, q_node: Var, q_grp: Var, batch: &ContextBatch, mode: ContextMode) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Contract("empty context batch".into()));
    }
    let hg = t.gather_rows(h, batch.rows.clone())?;
    let qn = t.gather_rows(q_node, batch.contexts.clone())?;
    let scores = match mode {
        ContextMode::Agnostic => t.row_dot(hg, qn)?,
        ContextMode::Membership(ContextForm::Additive) => {
            let zq = t.matmul(z, q_grp)?;
            let zq = t.gather_rows(zq, batch.rows.clone())?;
            let q = t.add(qn, zq)?;
            t.row_dot(hg, q)?
        }
        ContextMode::Membership(ContextForm::Joint) => {
            let (k, d) = (t.shape(z)[1], t.shape(hg)[1]);
            if t.shape(q_grp) != [t.shape(q_node)[0], k * d] {
                return Err(Error::dim("joint context table", t.shape(q_grp), &[t.shape(q_node)[0], k * d]));
            }
            let zg = t.gather_rows(z, batch.rows.clone())?;
            let qg = t.gather_rows(q_grp, batch.contexts.clone())?;
            let mut parts = vec![t.row_dot(hg, qn)?];
            for g in 0..k {
                let block = t.slice_cols(qg, g * d, (g + 1) * d)?;
                let s = t.row_dot(hg, block)?;
                let w = t.slice_cols(zg, g, g + 1)?;
                let w = t.reshape(w, &[batch.len()])?;
                parts.push(t.mul(s, w)?);
            }
            t.add_all(&parts)?
        }
    };
    let signs = t.constant(batch.signs.clone());
    let signed = t.mul(scores, signs)?;
    let clamped = t.clamp(signed, -LOGIT_CLAMP, LOGIT_CLAMP)?;
    let log_p = t.log_sigmoid(clamped)?;
    let weights = t.constant(batch.weights.clone());
    let weighted = t.mul(log_p, weights)?;
    let total = t.sum(weighted)?;
    t.scale(total, -1.0)
}

/// Must-link and cannot-link pairs (batch rows) between layers `l` and `l+1`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LinkSets {
    pub must: Vec<(usize, usize)>,
    pub cannot: Vec<(usize, usize)>,
}

/// All unordered pairs `(i, j)`, `i < j < n`.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

fn subsample(pairs: Vec<(usize, usize)>, cap: usize, seed: u64) -> Vec<(usize, usize)> {
    if pairs.len() <= cap {
        return pairs;
    }
    let mut picked = index::sample(&mut rng::stream(seed), pairs.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pairs[i]).collect()
}

/// Must-links join pairs sharing a lower-layer group; cannot-links join
/// pairs in different upper-layer groups. Each set is capped by a seeded
/// subsample that keeps candidate order.
pub fn build_links(
    lower: &[usize],
    upper: &[usize],
    candidates: &[(usize, usize)],
    caps: (usize, usize),
    seed: u64,
) -> Result<LinkSets> {
    let n = lower.len().min(upper.len());
    if candidates.iter().any(|&(i, j)| i >= n || j >= n) {
        return Err(Error::Contract("link candidate outside the assignments".into()));
    }
    let must = candidates.iter().copied().filter(|&(i, j)| lower[i] == lower[j]).collect();
    let cannot = candidates.iter().copied().filter(|&(i, j)| upper[i] != upper[j]).collect();
    Ok(LinkSets {
        must: subsample(must, caps.0, rng::mix(seed, &[0])),
        cannot: subsample(cannot, caps.1, rng::mix(seed, &[1])),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    /// Plain sum over the link sets (the indicator form).
    Sum,
    /// Mean over each set; an empty set contributes zero.
    Mean,
}

fn pair_dots(t: &mut Tape, z: Var, pairs: &[(usize, usize)]) -> Result<Var> {
    let left: Arc<[usize]> = pairs.iter().map(|p| p.0).collect();
    let right: Arc<[usize]> = pairs.iter().map(|p| p.1).collect();
    let a = t.gather_rows(z, left)?;
    let b = t.gather_rows(z, right)?;
    let d = t.row_dot(a, b)?;
    t.sum(d)
}

/// Relaxed inter-layer regularizer:
/// `gamma * sum_must (1 - z_u_i . z_u_j) + beta * sum_cannot z_l_i . z_l_j`.
pub fn reg_loss(
    t: &mut Tape,
    links: &LinkSets,
    z_lower: Var,
    z_upper: Var,
    gamma: f64,
    beta: f64,
    reduction: Reduction,
) -> Result<Var> {
    if gamma < 0.0 || beta < 0.0 {
        return Err(Error::Config("gamma and beta must be non-negative".into()));
    }
    let mut terms = Vec::new();
    if !links.must.is_empty() {
        let s = pair_dots(t, z_upper, &links.must)?;
        let m = links.must.len() as f64;
        let norm = if reduction == Reduction::Mean { m } else { 1.0 };
        // gamma * (m - s) / norm
        let v = t.scale(s, -gamma / norm)?;
        terms.push(t.add_scalar(v, gamma * m / norm)?);
    }
    if !links.cannot.is_empty() {
        let s = pair_dots(t, z_lower, &links.cannot)?;
        let norm = if reduction == Reduction::Mean {
            links.cannot.len() as f64
        } else {
            1.0
        };
        terms.push(t.scale(s, beta / norm)?);
    }
    if terms.is_empty() {
        return Ok(t.constant(Tensor::scalar(0.0)));
    }
    t.add_all(&terms)
}

/// Mean cross-entropy of a linear softmax head.
pub fn classification_loss(t: &mut Tape, embedding: Var, w: Var, b: Var, labels: impl Into<Arc<[usize]>>) -> Result<Var> {
    let logits = t.matmul(embedding, w)?;
    let logits = t.add_row(logits, b)?;
    t.cross_entropy(logits, labels)
}

/// Per-component loss values of one evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub context: Vec<f64>,
    pub reg: Vec<f64>,
    /// Unweighted classification loss when a head is attached.
    pub classification: Option<f64>,
    pub total: f64,
}

/// Sums the layer terms and the weighted classification term.
pub fn total_loss(t: &mut Tape, context: &[Var], reg: &[Var], classification: Option<(Var, f64)>) -> Result<(Var, LossBreakdown)> {
    let mut parts: Vec<Var> = context.iter().chain(reg).copied().collect();
    if let Some((c, w)) = classification {
        parts.push(t.scale(c, w)?);
    }
    let total = if parts.is_empty() {
        t.constant(Tensor::scalar(0.0))
    } else {
        t.add_all(&parts)?
    };
    let breakdown = LossBreakdown {
        context: context.iter().map(|&v| t.scalar(v)).collect(),
        reg: reg.iter().map(|&v| t.scalar(v)).collect(),
        classification: classification.map(|(c, _)| t.scalar(c)),
        total: t.scalar(total),
    };
    Ok((total, breakdown))
}
