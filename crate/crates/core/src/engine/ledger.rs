use std::fmt::Write as _;

use serde::Serialize;

use super::output::fmt17;
use crate::graph::Split;

/// Bytes one client sent and received in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LedgerEntry {
    pub round: usize,
    pub client_id: usize,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

/// Per-round, per-client communication plus what the server itself counted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommLedger {
    pub entries: Vec<LedgerEntry>,
    /// Bytes the server decoded each round, indexed by `round - 1`.
    pub server_received: Vec<u64>,
    /// Bytes the server encoded each round.
    pub server_sent: Vec<u64>,
}

impl CommLedger {
    pub fn total_up(&self) -> u64 {
        self.entries.iter().map(|e| e.bytes_up).sum()
    }

    pub fn total_down(&self) -> u64 {
        self.entries.iter().map(|e| e.bytes_down).sum()
    }

    pub fn round(&self, round: usize) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.iter().filter(move |e| e.round == round)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("round,client_id,bytes_up,bytes_down\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{},{}", e.round, e.client_id, e.bytes_up, e.bytes_down);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientMetric {
    pub client_id: usize,
    pub split: Split,
    pub accuracy: f64,
    pub loss: f64,
    /// Nodes in the split; the weight of this row in global accuracy.
    pub num_nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub participants: Vec<usize>,
    pub clients: Vec<ClientMetric>,
    pub global_test_accuracy: f64,
}

/// Node-weighted mean of per-client test accuracies.
pub fn global_accuracy(rows: &[ClientMetric]) -> f64 {
    let (mut num, mut den) = (0.0, 0usize);
    for r in rows.iter().filter(|r| r.split == Split::Test) {
        num += r.accuracy * r.num_nodes as f64;
        den += r.num_nodes;
    }
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

pub const METRICS_HEADER: &str = "round,client_id,split,accuracy,loss,num_nodes";

pub fn metrics_csv(history: &[RoundMetrics]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for m in history {
        for r in &m.clients {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                m.round,
                r.client_id,
                r.split.as_str(),
                fmt17(r.accuracy),
                fmt17(r.loss),
                r.num_nodes
            );
        }
    }
    s
}
