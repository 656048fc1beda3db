//! Downstream evaluation, diagnostics, exporters and the synthetic
//! hierarchy benchmark.

mod export;
mod metrics;
mod protocol;
mod synthetic;

pub use export::{attention_csv, embeddings_csv, memberships_csv};
pub use metrics::{
    attention_divergence, bernoulli_kl, divergence, histogram, link_prediction_metrics, mean_std, nmi, node_classification_metrics,
    CandidateSet, ClassificationMetrics, LinkMetrics,
};
pub use protocol::{
    classifier_predictions, fit_probe, hierarchy_recovery, link_prediction_eval, node_classification_cv, probe_cv, score_links, split_links, EvalReport,
    HierarchyScores, LinkSplit,
};
pub use synthetic::{generate_synthetic, SyntheticGraph, SyntheticSpec};
