//! Round orchestration, baselines, communication ledger and run artifacts.

mod config;
mod experiment;
mod federation;
mod ledger;
mod output;

pub use config::{parse_override, BackboneChoice, FederationConfig, Method, PartitionChoice, SparsityChoice};
pub use experiment::{run_experiment, run_on_graph, summarize, write_outputs, Summary};
pub use federation::{fedavg_aggregate, ClientState, Federation};
pub use ledger::{global_accuracy, metrics_csv, ClientMetric, CommLedger, LedgerEntry, RoundMetrics, METRICS_HEADER};
pub use output::{fmt17, to_json};
