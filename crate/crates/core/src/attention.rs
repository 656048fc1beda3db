//! Dual-level attentive aggregation. Each head scores neighbors twice with
//! the same transformation `W`: once on transformed node states (alpha) and
//! once on transformed assigned-group embeddings (lambda). Messages are
//! weighted by the product of the two.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::membership::one_hot_rows;
use crate::numerics::tape::softmax_in_place;
use crate::numerics::{leaky_relu, Tape, Tensor, Var};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Reference implementation of the attention normalizer for one target:
/// `softmax_j LeakyReLU(a . [p_i || p_j])`.
pub fn attention_weights(p_target: &[f64], p_neighbors: &[&[f64]], a: &[f64]) -> Result<Vec<f64>> {
    if p_neighbors.is_empty() {
        return Err(Error::Contract("attention over an empty neighborhood".into()));
    }
    let d = p_target.len();
    if a.len() != 2 * d || p_neighbors.iter().any(|p| p.len() != d) {
        return Err(Error::dim("attention_weights", &[d], &[a.len()]));
    }
    let left: f64 = a[..d].iter().zip(p_target).map(|(x, y)| x * y).sum();
    let mut logits: Vec<f64> = p_neighbors
        .iter()
        .map(|p| {
            let right: f64 = a[d..].iter().zip(*p).map(|(x, y)| x * y).sum();
            leaky_relu(left + right, LEAKY_SLOPE)
        })
        .collect();
    softmax_in_place(&mut logits);
    Ok(logits)
}

/// Trainables of one attention head: `w` is `d_in x d_out` (applied as
/// `h w`), the attention vectors have length `2 d_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub w: Tensor,
    pub a_node: Tensor,
    pub a_grp: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub layer: usize,
    pub heads: Vec<HeadParams>,
}

impl LayerParams {
    pub fn validate(&self) -> Result<()> {
        let first = self
            .heads
            .first()
            .ok_or_else(|| Error::Config(format!("layer {} has no heads", self.layer)))?;
        let d_out = first.w.cols();
        for h in &self.heads {
            if h.w.shape() != first.w.shape() || h.a_node.shape() != [2 * d_out] || h.a_grp.shape() != [2 * d_out] {
                return Err(Error::dim("layer params", first.w.shape(), h.w.shape()));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.heads[0].w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.heads[0].w.cols()
    }
}

/// A head's parameters registered on a tape.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub w: Var,
    pub a_node: Var,
    pub a_grp: Var,
}

/// Sampled neighborhoods of one layer, flattened into edges. Output node `s`
/// sits at row `s` of the input (outputs are a prefix of the inputs); its
/// edges are `offsets[s]..offsets[s+1]` and edge `e` reads input row
/// `index[e]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerBlock {
    pub index: Arc<[usize]>,
    pub source: Arc<[usize]>,
    pub offsets: Arc<[usize]>,
}

impl LayerBlock {
    pub fn new(neighborhoods: &[Vec<usize>]) -> Result<Self> {
        let mut offsets = Vec::with_capacity(neighborhoods.len() + 1);
        offsets.push(0);
        let mut index = Vec::new();
        let mut source = Vec::new();
        for (s, n) in neighborhoods.iter().enumerate() {
            if n.is_empty() {
                return Err(Error::Contract(format!("output row {s} has an empty neighbor sample")));
            }
            index.extend_from_slice(n);
            source.extend(std::iter::repeat_n(s, n.len()));
            offsets.push(index.len());
        }
        Ok(LayerBlock {
            index: index.into(),
            source: source.into(),
            offsets: offsets.into(),
        })
    }

    pub fn output_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.index.len()
    }

    pub fn neighbors_of(&self, s: usize) -> &[usize] {
        &self.index[self.offsets[s]..self.offsets[s + 1]]
    }

    /// `1 / |N_s|` per edge.
    fn uniform_weights(&self) -> Tensor {
        let mut w = Vec::with_capacity(self.edge_count());
        for s in 0..self.output_count() {
            let n = (self.offsets[s + 1] - self.offsets[s]) as f64;
            w.extend(std::iter::repeat_n(1.0 / n, self.offsets[s + 1] - self.offsets[s]));
        }
        Tensor::from_parts(vec![w.len(), 1], w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Elu,
    /// Test hook exposing the pre-activation sum.
    Identity,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AggregateOptions {
    /// Replace lambda with `1 / |N_i|`.
    pub disable_lambda: bool,
    /// Look up group embeddings with the argmax of z instead of `z Phi`.
    pub hard_lookup: bool,
    pub activation: Activation,
}

/// Per-head attention coefficients as `E x 1` tape values.
#[derive(Clone, Copy, Debug)]
pub struct HeadAttention {
    pub alpha: Var,
    pub lambda: Var,
}

/// Edge scores `LeakyReLU(a . [p_source || p_neighbor])`, normalized per
/// output row.
fn edge_attention(t: &mut Tape, p: Var, a: Var, block: &LayerBlock) -> Result<Var> {
    let d = t.shape(p)[1];
    let a2 = t.reshape(a, &[2, d])?;
    let scores = t.matmul_t(p, a2)?;
    let left = t.slice_cols(scores, 0, 1)?;
    let right = t.slice_cols(scores, 1, 2)?;
    let left = t.gather_rows(left, block.source.clone())?;
    let right = t.gather_rows(right, block.index.clone())?;
    let logits = t.add(left, right)?;
    let logits = t.leaky_relu(logits, LEAKY_SLOPE)?;
    t.segment_softmax(logits, block.offsets.clone())
}

/// One aggregation layer.
///
/// `h_in` is `n_in x d_in`, `z_in` the relaxed assignments of the same rows
/// (`n_in x K`), `phi` the layer's `K x d_in` group embeddings. Returns the
/// `n_out x d_out` states and every head's coefficients.
pub fn aggregate(
    t: &mut Tape,
    h_in: Var,
    z_in: Var,
    phi: Var,
    heads: &[HeadVars],
    block: &LayerBlock,
    options: AggregateOptions,
) -> Result<(Var, Vec<HeadAttention>)> {
    if heads.is_empty() {
        return Err(Error::Config("aggregation needs at least one head".into()));
    }
    let (n_in, k) = (t.value(z_in).rows(), t.value(z_in).cols());
    if t.value(h_in).rows() != n_in || t.value(phi).rows() != k || t.value(phi).cols() != t.value(h_in).cols() {
        return Err(Error::dim("aggregate", t.shape(h_in), t.shape(phi)));
    }
    if block.output_count() > n_in || block.index.iter().any(|&i| i >= n_in) {
        return Err(Error::Contract("neighbor block refers past the input rows".into()));
    }
    let lookup = if options.hard_lookup {
        let hard = one_hot_rows(t.value(z_in));
        t.constant(hard)
    } else {
        z_in
    };
    let uniform = options.disable_lambda.then(|| t.constant(block.uniform_weights()));

    let mut outputs = Vec::with_capacity(heads.len());
    let mut record = Vec::with_capacity(heads.len());
    for head in heads {
        let p = t.matmul(h_in, head.w)?;
        let alpha = edge_attention(t, p, head.a_node, block)?;
        let lambda = match uniform {
            Some(u) => u,
            None => {
                // (z Phi) W evaluated as z (Phi W): K rows instead of n_in.
                let group_w = t.matmul(phi, head.w)?;
                let g = t.matmul(lookup, group_w)?;
                edge_attention(t, g, head.a_grp, block)?
            }
        };
        let weights = t.mul(alpha, lambda)?;
        outputs.push(t.segment_weighted_sum(p, weights, block.index.clone(), block.offsets.clone())?);
        record.push(HeadAttention { alpha, lambda });
    }
    let mean = t.mean_of(&outputs)?;
    let out = match options.activation {
        Activation::Elu => t.elu(mean)?,
        Activation::Identity => mean,
    };
    Ok((out, record))
}

/// Attention coefficients of one layer over global node ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttentionRecord {
    pub layer: usize,
    /// `(target, neighbor)` per edge, as node ids.
    pub edges: Vec<(usize, usize)>,
    /// Edge offsets per target.
    pub offsets: Vec<usize>,
    /// `alpha[head][edge]`.
    pub alpha: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
}

impl AttentionRecord {
    /// Collects tape values; `input_nodes` maps input rows to node ids.
    pub fn collect(t: &Tape, layer: usize, block: &LayerBlock, input_nodes: &[usize], heads: &[HeadAttention]) -> Self {
        let edges = block
            .source
            .iter()
            .zip(block.index.iter())
            .map(|(&s, &j)| (input_nodes[s], input_nodes[j]))
            .collect();
        AttentionRecord {
            layer,
            edges,
            offsets: block.offsets.to_vec(),
            alpha: heads.iter().map(|h| t.value(h.alpha).data().to_vec()).collect(),
            lambda: heads.iter().map(|h| t.value(h.lambda).data().to_vec()).collect(),
        }
    }

    pub fn target_count(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    /// Head-averaged `(alpha, lambda)` over the edges of target row `s`.
    pub fn head_mean(&self, s: usize) -> (Vec<f64>, Vec<f64>) {
        let r = self.offsets[s]..self.offsets[s + 1];
        let m = self.alpha.len() as f64;
        let avg = |per_head: &[Vec<f64>]| -> Vec<f64> {
            r.clone().map(|e| per_head.iter().map(|h| h[e]).sum::<f64>() / m).collect()
        };
        (avg(&self.alpha), avg(&self.lambda))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_vector_and_identical_neighbors_are_uniform() {
        let p = [0.3, -1.2];
        let n1 = [1.0, 2.0];
        let n2 = [-4.0, 0.5];
        let w = attention_weights(&p, &[&n1, &n2, &n1], &[0.0; 4]).unwrap();
        assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        let w = attention_weights(&p, &[&n1, &n1], &[0.4, 0.1, -0.7, 2.0]).unwrap();
        assert!(w.iter().all(|&x| (x - 0.5).abs() < 1e-15));
        assert!(matches!(attention_weights(&p, &[], &[0.0; 4]), Err(Error::Contract(_))));
    }

    #[test]
    fn constructed_logits_give_sevenths() {
        // With a = [0 | 1] and one-dimensional states the logits are p_j.
        let (l2, l4) = (2f64.ln(), 4f64.ln());
        let w = attention_weights(&[5.0], &[&[0.0], &[l2], &[l4]], &[0.0, 1.0]).unwrap();
        for (x, want) in w.iter().zip([1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0]) {
            assert_abs_diff_eq!(*x, want, epsilon = 1e-12);
        }
    }

    fn identity_head(t: &mut Tape, d: usize) -> HeadVars {
        HeadVars {
            w: t.constant(Tensor::identity(d)),
            a_node: t.constant(Tensor::zeros(&[2 * d])),
            a_grp: t.constant(Tensor::zeros(&[2 * d])),
        }
    }

    #[test]
    fn uniform_coefficients_average_then_shrink() {
        let mut t = Tape::new();
        let h = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, -1.0], vec![2.0, 5.0]]).unwrap();
        let h = t.constant(h);
        let z = t.constant(Tensor::full(&[4, 2], 0.5));
        let phi = t.constant(Tensor::zeros(&[2, 2]));
        let head = identity_head(&mut t, 2);
        let block = LayerBlock::new(&[vec![1, 2, 3]]).unwrap();
        let options = AggregateOptions {
            activation: Activation::Identity,
            ..Default::default()
        };
        let (out, _) = aggregate(&mut t, h, z, phi, &[head], &block, options).unwrap();
        // lambda alpha = 1/9 per neighbor: (1/3) * mean of the three states.
        let want = [(1.0 + 3.0 + 2.0) / 9.0, (2.0 - 1.0 + 5.0) / 9.0];
        for (a, b) in t.value(out).data().iter().zip(want) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_neighbor_passes_its_transformed_state() {
        let mut t = Tape::new();
        let h = t.constant(Tensor::from_rows(&[vec![9.0, 9.0], vec![-1.0, 0.5]]).unwrap());
        let z = t.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let phi = t.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let w = Tensor::from_rows(&[vec![2.0, 0.0], vec![1.0, -1.0]]).unwrap();
        let head = HeadVars {
            w: t.constant(w),
            a_node: t.constant(Tensor::vector(vec![0.3, -0.2, 0.5, 1.0])),
            a_grp: t.constant(Tensor::vector(vec![-0.1, 0.4, 0.2, 0.9])),
        };
        let block = LayerBlock::new(&[vec![1]]).unwrap();
        let (out, att) = aggregate(&mut t, h, z, phi, &[head], &block, AggregateOptions::default()).unwrap();
        assert_eq!(t.value(att[0].alpha).data(), &[1.0]);
        assert_eq!(t.value(att[0].lambda).data(), &[1.0]);
        // h_1 w = [-1.5, -0.5]; ELU applies to both entries.
        let want = [(-1.5f64).exp_m1(), (-0.5f64).exp_m1()];
        for (a, b) in t.value(out).data().iter().zip(want) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn duplicated_heads_match_a_single_head() {
        let run = |copies: usize| {
            let mut t = Tape::new();
            let h = t.constant(Tensor::from_rows(&[vec![0.1, 0.2], vec![0.5, -0.3], vec![1.1, 0.7]]).unwrap());
            let z = t.constant(Tensor::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8], vec![0.5, 0.5]]).unwrap());
            let phi = t.constant(Tensor::from_rows(&[vec![0.4, -0.6], vec![1.0, 0.3]]).unwrap());
            let head = HeadVars {
                w: t.constant(Tensor::from_rows(&[vec![0.7, 0.1], vec![-0.2, 0.9]]).unwrap()),
                a_node: t.constant(Tensor::vector(vec![0.3, -0.2, 0.5, 1.0])),
                a_grp: t.constant(Tensor::vector(vec![-0.1, 0.4, 0.2, 0.9])),
            };
            let block = LayerBlock::new(&[vec![1, 2, 0], vec![0, 2]]).unwrap();
            let heads = vec![head; copies];
            let (out, _) = aggregate(&mut t, h, z, phi, &heads, &block, AggregateOptions::default()).unwrap();
            t.value(out).clone()
        };
        let one = run(1);
        let two = run(2);
        for (a, b) in one.data().iter().zip(two.data()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn empty_neighbor_sample_is_rejected() {
        assert!(matches!(LayerBlock::new(&[vec![0], vec![]]), Err(Error::Contract(_))));
    }
}
