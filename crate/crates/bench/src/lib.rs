//! Benchmark fixtures. The benches themselves live in `benches/`.

use fedpg_core::engine::FederationConfig;
use fedpg_core::graph::{homophily_graph, Graph, HomophilyParams, SplitRatios};

/// Label-homophilous graph with `n` nodes and `f` features.
pub fn bench_graph(n: usize, f: usize) -> Graph {
    homophily_graph(
        &HomophilyParams {
            num_nodes: n,
            num_classes: 7,
            avg_degree: 4.0,
            homophily: 0.7,
            num_features: f,
            feature_signal: 0.1,
            feature_noise: 1.0,
            splits: SplitRatios { train: 0.1, val: 0.2 },
        },
        0,
    )
    .expect("valid generator parameters")
}

pub fn bench_config(method: &str) -> FederationConfig {
    let ov: Vec<(String, String)> = [
        ("method", method),
        ("partition", "balanced"),
        ("rounds", "1"),
        ("local_epochs", "5"),
        ("server_epochs", "20"),
        ("lr", "0.02"),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    FederationConfig::resolve(None, &ov).expect("valid bench config")
}
