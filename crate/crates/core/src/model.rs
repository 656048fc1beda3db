//! The stacked model: parameters, sampled computation plans and the forward
//! pass over a batch of targets.

use std::collections::HashMap;

use crate::attention::{aggregate, AggregateOptions, AttentionRecord, HeadAttention, HeadParams, HeadVars, LayerBlock, LayerParams};
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::graph::{sample_neighbors, Graph};
use crate::membership::{gumbel_matrix, membership_on_tape, relaxed_assignment, GroupEmbeddings, NoiseSpace};
use crate::numerics::{Tape, Tensor, Var};
use crate::objective::{ContextForm, ContextTable};
use crate::rng;

/// Sizes that fix every parameter shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub feature_dim: usize,
    pub node_count: usize,
    pub dims: Vec<usize>,
    pub groups: Vec<usize>,
    pub heads: usize,
    pub classes: Option<usize>,
    pub context_form: ContextForm,
}

impl ModelShape {
    pub fn new(config: &TrainConfig, g: &Graph) -> Self {
        let classes = (config.classification && g.labels().is_some()).then(|| g.class_count());
        ModelShape {
            feature_dim: g.feature_dim(),
            node_count: g.node_count(),
            dims: config.dims.clone(),
            groups: config.groups.clone(),
            heads: config.heads,
            classes,
            context_form: config.context_form,
        }
    }

    pub fn input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.feature_dim
        } else {
            self.dims[layer - 1]
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.dims.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    pub groups: GroupEmbeddings,
    pub attention: LayerParams,
    pub context: ContextTable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    /// `embedding_dim x classes`.
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LayerWeights>,
    pub classifier: Option<Classifier>,
}

/// Registered tape handles mirroring [`ModelParams`].
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub layers: Vec<LayerVars>,
    pub classifier: Option<(Var, Var)>,
    /// Every handle, in [`ModelParams::named`] order.
    pub all: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct LayerVars {
    pub phi: Var,
    pub heads: Vec<HeadVars>,
    pub q_node: Var,
    pub q_grp: Var,
}

impl ModelParams {
    /// Glorot-uniform initialization (classifier bias at zero).
    pub fn init(shape: &ModelShape, seed: u64) -> Self {
        let mut r = rng::derived(seed, &[rng::tag::INIT]);
        let layers = (0..shape.dims.len())
            .map(|l| {
                let (d_in, d_out, k) = (shape.input_dim(l), shape.dims[l], shape.groups[l]);
                let phi = Tensor::glorot_uniform(&[k, d_in], &mut r);
                let heads = (0..shape.heads)
                    .map(|_| HeadParams {
                        w: Tensor::glorot_uniform(&[d_in, d_out], &mut r),
                        a_node: Tensor::glorot_uniform(&[2 * d_out], &mut r),
                        a_grp: Tensor::glorot_uniform(&[2 * d_out], &mut r),
                    })
                    .collect();
                let q_node = Tensor::glorot_uniform(&[shape.node_count, d_out], &mut r);
                let q_grp = match shape.context_form {
                    ContextForm::Additive => Tensor::glorot_uniform(&[k, d_out], &mut r),
                    ContextForm::Joint => Tensor::glorot_uniform(&[shape.node_count, k * d_out], &mut r),
                };
                LayerWeights {
                    groups: GroupEmbeddings { layer: l, phi },
                    attention: LayerParams { layer: l, heads },
                    context: ContextTable { layer: l, q_node, q_grp },
                }
            })
            .collect();
        let classifier = shape.classes.map(|c| Classifier {
            w: Tensor::glorot_uniform(&[shape.embedding_dim(), c], &mut r),
            b: Tensor::zeros(&[c]),
        });
        ModelParams { layers, classifier }
    }

    /// `(name, tensor, decays)` for every parameter in a fixed order. Weight
    /// decay applies to attention transforms and vectors only.
    pub fn named(&self) -> Vec<(String, &Tensor, bool)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.phi"), &layer.groups.phi, false));
            for (m, h) in layer.attention.heads.iter().enumerate() {
                out.push((format!("layer{l}.head{m}.w"), &h.w, true));
                out.push((format!("layer{l}.head{m}.a_node"), &h.a_node, true));
                out.push((format!("layer{l}.head{m}.a_grp"), &h.a_grp, true));
            }
            out.push((format!("layer{l}.q_node"), &layer.context.q_node, false));
            out.push((format!("layer{l}.q_grp"), &layer.context.q_grp, false));
        }
        if let Some(c) = &self.classifier {
            out.push(("classifier.w".into(), &c.w, false));
            out.push(("classifier.b".into(), &c.b, false));
        }
        out
    }

    /// Mutable parameters in [`ModelParams::named`] order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.groups.phi);
            for h in &mut layer.attention.heads {
                out.push(&mut h.w);
                out.push(&mut h.a_node);
                out.push(&mut h.a_grp);
            }
            out.push(&mut layer.context.q_node);
            out.push(&mut layer.context.q_grp);
        }
        if let Some(c) = &mut self.classifier {
            out.push(&mut c.w);
            out.push(&mut c.b);
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named().into_iter().map(|(_, t, _)| t).collect()
    }

    pub fn decay_mask(&self, weight_decay: f64) -> Vec<f64> {
        self.named().into_iter().map(|(_, _, d)| if d { weight_decay } else { 0.0 }).collect()
    }

    /// Rebuilds parameters from named tensors, requiring every shape to
    /// match `shape`.
    pub fn from_named(shape: &ModelShape, tensors: &[(String, Tensor)]) -> Result<Self> {
        let mut params = ModelParams::init(shape, 0);
        let expected: Vec<(String, Vec<usize>)> = params
            .named()
            .into_iter()
            .map(|(n, t, _)| (n, t.shape().to_vec()))
            .collect();
        let lookup: HashMap<&str, &Tensor> = tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        if lookup.len() != expected.len() {
            return Err(Error::Incompatible(format!(
                "checkpoint holds {} parameters, model expects {}",
                lookup.len(),
                expected.len()
            )));
        }
        for ((name, want), slot) in expected.iter().zip(params.tensors_mut()) {
            let found = lookup
                .get(name.as_str())
                .ok_or_else(|| Error::Incompatible(format!("missing parameter `{name}`")))?;
            if found.shape() != want.as_slice() {
                return Err(Error::Incompatible(format!(
                    "`{name}` has shape {:?}, expected {want:?}",
                    found.shape()
                )));
            }
            *slot = (*found).clone();
        }
        Ok(params)
    }

    /// Registers every parameter on the tape, as trainable or constant.
    pub fn register(&self, t: &mut Tape, trainable: bool) -> ModelVars {
        let vars: Vec<Var> = self
            .tensors()
            .into_iter()
            .map(|x| if trainable { t.param(x.clone()) } else { t.constant(x.clone()) })
            .collect();
        self.bind(&vars).expect("one var per tensor")
    }

    /// Maps vars given in [`ModelParams::tensors`] order onto the model layout.
    pub fn bind(&self, vars: &[Var]) -> Result<ModelVars> {
        let expected = self.tensors().len();
        if vars.len() != expected {
            return Err(Error::Incompatible(format!("{} vars for {expected} parameters", vars.len())));
        }
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("length checked");
        let layers = self
            .layers
            .iter()
            .map(|layer| {
                let phi = next();
                let heads = layer
                    .attention
                    .heads
                    .iter()
                    .map(|_| HeadVars {
                        w: next(),
                        a_node: next(),
                        a_grp: next(),
                    })
                    .collect();
                let q_node = next();
                let q_grp = next();
                LayerVars { phi, heads, q_node, q_grp }
            })
            .collect();
        let classifier = self.classifier.as_ref().map(|_| (next(), next()));
        Ok(ModelVars {
            layers,
            classifier,
            all: vars.to_vec(),
        })
    }
}

/// Sampled computation graph for a batch of targets.
///
/// `nodes[L]` are the targets; `nodes[l]` lists the inputs of layer `l`,
/// starting with `nodes[l + 1]` in order and followed by newly sampled
/// neighbors in first-seen order, so targets are a prefix at every level.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPlan {
    pub nodes: Vec<Vec<usize>>,
    pub blocks: Vec<LayerBlock>,
    /// Gumbel noise per layer over `nodes[l]` (zeros when noise-free).
    pub noise: Vec<Tensor>,
}

impl BatchPlan {
    /// `noise_seed = None` gives noise-free assignments.
    pub fn build(
        g: &Graph,
        targets: &[usize],
        fanouts: &[usize],
        groups: &[usize],
        self_loops: bool,
        sample_seed: u64,
        noise_seed: Option<u64>,
    ) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Contract("batch without targets".into()));
        }
        if let Some(&bad) = targets.iter().find(|&&v| v >= g.node_count()) {
            return Err(Error::Contract(format!("target {bad} outside the graph")));
        }
        let layers = fanouts.len();
        let mut nodes = vec![Vec::new(); layers + 1];
        let mut blocks = Vec::with_capacity(layers);
        nodes[layers] = targets.to_vec();
        for l in (0..layers).rev() {
            let outputs = nodes[l + 1].clone();
            let mut inputs = outputs.clone();
            let mut position: HashMap<usize, usize> = inputs.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let mut neighborhoods = Vec::with_capacity(outputs.len());
            for (s, &v) in outputs.iter().enumerate() {
                let seed = rng::mix(sample_seed, &[rng::tag::NEIGHBORS, l as u64, v as u64]);
                let mut rows: Vec<usize> = sample_neighbors(g, v, fanouts[l], seed)?
                    .into_iter()
                    .map(|u| {
                        *position.entry(u).or_insert_with(|| {
                            inputs.push(u);
                            inputs.len() - 1
                        })
                    })
                    .collect();
                if self_loops {
                    rows.push(s);
                }
                neighborhoods.push(rows);
            }
            blocks.push(LayerBlock::new(&neighborhoods)?);
            nodes[l] = inputs;
        }
        blocks.reverse();
        let noise = (0..layers)
            .map(|l| match noise_seed {
                Some(seed) => gumbel_matrix(seed, l, &nodes[l], groups[l]),
                None => Tensor::zeros(&[nodes[l].len(), groups[l]]),
            })
            .collect();
        Ok(BatchPlan { nodes, blocks, noise })
    }

    pub fn layer_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn targets(&self) -> &[usize] {
        &self.nodes[self.layer_count()]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOptions {
    pub tau: f64,
    pub noise_space: NoiseSpace,
    pub aggregate: AggregateOptions,
}

impl ForwardOptions {
    pub fn from_config(config: &TrainConfig, tau: f64) -> Self {
        ForwardOptions {
            tau,
            noise_space: config.noise_space(),
            aggregate: AggregateOptions {
                disable_lambda: config.disable_lambda,
                hard_lookup: config.hard_lookup,
                ..Default::default()
            },
        }
    }
}

/// Tape handles produced by [`forward`]. `h[l]` covers `plan.nodes[l]`; the
/// per-layer `pi`, `z` and `attention` belong to layer `l` (input rows
/// `plan.nodes[l]`).
#[derive(Clone, Debug)]
pub struct Forward {
    pub h: Vec<Var>,
    pub pi: Vec<Var>,
    pub z: Vec<Var>,
    pub attention: Vec<Vec<HeadAttention>>,
}

pub fn forward(t: &mut Tape, g: &Graph, vars: &ModelVars, plan: &BatchPlan, options: ForwardOptions) -> Result<Forward> {
    if vars.layers.len() != plan.layer_count() {
        return Err(Error::Contract(format!(
            "plan has {} layers, model has {}",
            plan.layer_count(),
            vars.layers.len()
        )));
    }
    let x = t.constant(g.features().gather_rows(&plan.nodes[0]));
    let mut out = Forward {
        h: vec![x],
        pi: Vec::new(),
        z: Vec::new(),
        attention: Vec::new(),
    };
    for (l, layer) in vars.layers.iter().enumerate() {
        let h_in = out.h[l];
        let (logits, pi) = membership_on_tape(t, layer.phi, h_in)?;
        let z = relaxed_assignment(t, logits, pi, &plan.noise[l], options.tau, options.noise_space)?;
        let (h_out, att) = aggregate(t, h_in, z, layer.phi, &layer.heads, &plan.blocks[l], options.aggregate)?;
        out.h.push(h_out);
        out.pi.push(pi);
        out.z.push(z);
        out.attention.push(att);
    }
    Ok(out)
}

/// Rows `0..n` of a tape value (the batch targets).
pub fn prefix_rows(t: &mut Tape, v: Var, n: usize) -> Result<Var> {
    if t.value(v).rows() == n {
        return Ok(v);
    }
    t.gather_rows(v, (0..n).collect::<Vec<_>>())
}

/// Concatenated layer outputs of the targets.
pub fn target_embedding(t: &mut Tape, fwd: &Forward, targets: usize) -> Result<Var> {
    let parts: Vec<Var> = fwd.h[1..]
        .iter()
        .map(|&h| prefix_rows(t, h, targets))
        .collect::<Result<_>>()?;
    t.concat(&parts)
}

/// Whole-graph outputs with noise-free assignments.
#[derive(Clone, Debug)]
pub struct Inference {
    /// `states[l]` is `|V| x dims[l]`, the output of layer `l`.
    pub states: Vec<Tensor>,
    pub pi: Vec<Tensor>,
    pub z: Vec<Tensor>,
    pub attention: Vec<AttentionRecord>,
}

impl Inference {
    /// Concatenated layer outputs, `|V| x sum(dims)`.
    pub fn embeddings(&self) -> Tensor {
        let n = self.states[0].rows();
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            rows.push(self.states.iter().flat_map(|s| s.row(i).iter().copied()).collect::<Vec<f64>>());
        }
        Tensor::from_rows(&rows).expect("equal widths")
    }
}

/// Runs the model over every node in id order. Neighbor samples depend only
/// on `(seed, layer, node)`, so the result does not depend on `batch_size`.
pub fn infer(params: &ModelParams, config: &TrainConfig, g: &Graph, seed: u64, tau: f64) -> Result<Inference> {
    let layers = config.layers;
    let n = g.node_count();
    let mut states: Vec<Vec<f64>> = vec![Vec::new(); layers];
    let mut pi: Vec<Vec<f64>> = vec![Vec::new(); layers];
    let mut z: Vec<Vec<f64>> = vec![Vec::new(); layers];
    let mut attention: Vec<AttentionRecord> = (0..layers)
        .map(|l| AttentionRecord {
            layer: l,
            offsets: vec![0],
            alpha: vec![Vec::new(); config.heads],
            lambda: vec![Vec::new(); config.heads],
            ..Default::default()
        })
        .collect();
    let sample_seed = rng::mix(seed, &[rng::tag::INFERENCE]);
    let options = ForwardOptions::from_config(config, tau);
    let all: Vec<usize> = (0..n).collect();
    for chunk in all.chunks(config.batch_size.max(1)) {
        let plan = BatchPlan::build(g, chunk, &config.fanouts, &config.groups, config.self_loops, sample_seed, None)?;
        let mut t = Tape::new();
        let vars = params.register(&mut t, false);
        let fwd = forward(&mut t, g, &vars, &plan, options)?;
        let m = chunk.len();
        for l in 0..layers {
            let h = t.value(fwd.h[l + 1]);
            states[l].extend_from_slice(&h.data()[..m * h.cols()]);
            let p = t.value(fwd.pi[l]);
            pi[l].extend_from_slice(&p.data()[..m * p.cols()]);
            let zz = t.value(fwd.z[l]);
            z[l].extend_from_slice(&zz.data()[..m * zz.cols()]);

            // Only edges of the chunk's own targets are kept.
            let rec = AttentionRecord::collect(&t, l, &plan.blocks[l], &plan.nodes[l], &fwd.attention[l]);
            let end = rec.offsets[m];
            let dst = &mut attention[l];
            let base = dst.edges.len();
            dst.edges.extend_from_slice(&rec.edges[..end]);
            dst.offsets.extend(rec.offsets[1..=m].iter().map(|o| o + base));
            for hd in 0..config.heads {
                dst.alpha[hd].extend_from_slice(&rec.alpha[hd][..end]);
                dst.lambda[hd].extend_from_slice(&rec.lambda[hd][..end]);
            }
        }
    }
    let to_tensor = |data: Vec<f64>, cols: usize| Tensor::new(vec![n, cols], data);
    Ok(Inference {
        states: states
            .into_iter()
            .enumerate()
            .map(|(l, d)| to_tensor(d, config.dims[l]))
            .collect::<Result<_>>()?,
        pi: pi
            .into_iter()
            .enumerate()
            .map(|(l, d)| to_tensor(d, config.groups[l]))
            .collect::<Result<_>>()?,
        z: z
            .into_iter()
            .enumerate()
            .map(|(l, d)| to_tensor(d, config.groups[l]))
            .collect::<Result<_>>()?,
        attention,
    })
}
