use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::config::FederationConfig;
use super::federation::Federation;
use super::ledger::metrics_csv;
use super::output::to_json;
use crate::error::{FedError, Result};
use crate::graph::{load_graph, Graph};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub method: String,
    pub final_accuracy: f64,
    pub best_accuracy: f64,
    pub best_round: usize,
    pub total_bytes_up: u64,
    pub total_bytes_down: u64,
    pub wall_clock_seconds: f64,
    pub config: FederationConfig,
}

impl Summary {
    pub fn to_json(&self) -> String {
        to_json(&serde_json::to_value(self).expect("summary serializes"))
    }
}

/// Runs every configured round on `g` and returns the finished federation.
pub fn run_on_graph(cfg: &FederationConfig, g: &Graph) -> Result<(Federation, Summary)> {
    let start = Instant::now();
    let mut fed = Federation::from_graph(cfg.clone(), g)?;
    fed.run()?;
    let summary = summarize(&fed, start.elapsed().as_secs_f64());
    Ok((fed, summary))
}

pub fn summarize(fed: &Federation, seconds: f64) -> Summary {
    let (mut best_accuracy, mut best_round) = (f64::NEG_INFINITY, 0);
    for m in &fed.history {
        if m.global_test_accuracy > best_accuracy {
            best_accuracy = m.global_test_accuracy;
            best_round = m.round;
        }
    }
    Summary {
        method: fed.cfg.method.as_str().into(),
        final_accuracy: fed.history.last().map_or(0.0, |m| m.global_test_accuracy),
        best_accuracy: best_accuracy.max(0.0),
        best_round,
        total_bytes_up: fed.ledger.total_up(),
        total_bytes_down: fed.ledger.total_down(),
        wall_clock_seconds: seconds,
        config: fed.cfg.clone(),
    }
}

/// Writes `metrics.csv`, `ledger.csv` and `summary.json` into `out_dir`.
pub fn write_outputs(fed: &Federation, summary: &Summary, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| FedError::io(out_dir, e))?;
    let write = |name: &str, body: String| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| FedError::io(path, e))
    };
    write("metrics.csv", metrics_csv(&fed.history))?;
    write("ledger.csv", fed.ledger.to_csv())?;
    write("summary.json", summary.to_json())
}

/// Loads the dataset at `graph_dir`, runs the experiment and writes its
/// artifacts. Config problems are reported before any data is read.
pub fn run_experiment(cfg: &FederationConfig, graph_dir: &Path, out_dir: &Path) -> Result<Summary> {
    cfg.validate()?;
    let g = load_graph(graph_dir)?;
    let (fed, summary) = run_on_graph(cfg, &g)?;
    write_outputs(&fed, &summary, out_dir)?;
    Ok(summary)
}
