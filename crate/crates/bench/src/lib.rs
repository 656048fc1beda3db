//! Shared workloads for the benchmarks.

use hiermem::config::TrainConfig;
use hiermem::eval::{generate_synthetic, SyntheticSpec};
use hiermem::fixture::synthetic_config;
use hiermem::Graph;

/// The 200-node hierarchy benchmark graph and its training config.
pub fn synthetic_workload() -> (Graph, TrainConfig) {
    let s = generate_synthetic(&SyntheticSpec::benchmark(0)).expect("benchmark spec is valid");
    (s.graph, synthetic_config(1, 0))
}
