use std::fmt::Write as _;

use crate::graph::Graph;
use crate::membership::{concentration, hard_assignment};
use crate::model::Inference;

/// `id,e_1..e_d`, one row per node in id order.
pub fn embeddings_csv(g: &Graph, inference: &Inference) -> String {
    let emb = inference.embeddings();
    let mut out = String::from("id");
    for k in 1..=emb.cols() {
        write!(out, ",e_{k}").unwrap();
    }
    out.push('\n');
    for i in 0..g.node_count() {
        out.push_str(g.original_id(i));
        for v in emb.row(i) {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// `id,layer,group,concentration,pi_1..pi_K` for every node and layer
/// (layers numbered from 1). Layers with fewer groups leave the trailing
/// columns empty.
pub fn memberships_csv(g: &Graph, inference: &Inference) -> String {
    let width = inference.pi.iter().map(|p| p.cols()).max().unwrap_or(0);
    let mut out = String::from("id,layer,group,concentration");
    for k in 1..=width {
        write!(out, ",pi_{k}").unwrap();
    }
    out.push('\n');
    for i in 0..g.node_count() {
        for (l, pi) in inference.pi.iter().enumerate() {
            let row = pi.row(i);
            write!(out, "{},{},{},{}", g.original_id(i), l + 1, hard_assignment(row), concentration(row)).unwrap();
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            for _ in row.len()..width {
                out.push(',');
            }
            out.push('\n');
        }
    }
    out
}

/// `layer,target,neighbor,head,alpha,lambda`, one row per sampled edge and head.
pub fn attention_csv(g: &Graph, inference: &Inference) -> String {
    let mut out = String::from("layer,target,neighbor,head,alpha,lambda\n");
    for rec in &inference.attention {
        for (e, &(target, neighbor)) in rec.edges.iter().enumerate() {
            for m in 0..rec.alpha.len() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    rec.layer + 1,
                    g.original_id(target),
                    g.original_id(neighbor),
                    m,
                    rec.alpha[m][e],
                    rec.lambda[m][e]
                )
                .unwrap();
            }
        }
    }
    out
}
