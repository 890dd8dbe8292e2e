use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::bail;
use clap::{Args, Parser, Subcommand};
use fedpg_core::engine::{parse_override, run_experiment, FederationConfig};
use fedpg_core::graph::{
    edge_homophily, homophily_graph, load_graph, modularity, save_graph, sbm_graph, HomophilyParams, PartitionMethod,
    Partitioner, SbmParams, Split, SplitRatios,
};
use fedpg_core::FedError;

mod report;

#[derive(Parser)]
#[command(
    name = "fedpg",
    version,
    about = "Deterministic federated prototype graph learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset directory.
    GenData {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Preview how a dataset would be split across clients.
    Partition {
        /// Dataset directory.
        graph: PathBuf,
        #[arg(long, default_value_t = 10)]
        clients: usize,
        #[arg(long, default_value = "louvain")]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one experiment and write metrics.csv, ledger.csv and summary.json.
    Run {
        /// Dataset directory.
        graph: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// KEY=VALUE override, applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Sets the partition, init, sampling and noise seeds at once.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize run directories and write convergence curves.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "curves.csv")]
        curves: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 16)]
    features: usize,
    #[arg(long, default_value_t = 1.0)]
    signal: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.2)]
    train: f64,
    #[arg(long, default_value_t = 0.2)]
    val: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum GenKind {
    /// Stochastic block model, one block per class.
    Sbm {
        /// Comma-separated block sizes.
        #[arg(long, value_delimiter = ',', default_value = "50,50,50,50")]
        blocks: Vec<usize>,
        #[arg(long, default_value_t = 0.1)]
        p_in: f64,
        #[arg(long, default_value_t = 0.01)]
        p_out: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Random graph with a target fraction of same-label edges.
    Homophily {
        #[arg(long, default_value_t = 1000)]
        nodes: usize,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 6.0)]
        degree: f64,
        #[arg(long, default_value_t = 0.7)]
        homophily: f64,
        #[command(flatten)]
        common: Common,
    },
}

fn gen_data(kind: GenKind) -> anyhow::Result<()> {
    let (g, out) = match kind {
        GenKind::Sbm {
            blocks,
            p_in,
            p_out,
            common: c,
        } => {
            let params = SbmParams {
                block_sizes: blocks,
                p_in,
                p_out,
                num_features: c.features,
                feature_signal: c.signal,
                feature_noise: c.noise,
                splits: SplitRatios {
                    train: c.train,
                    val: c.val,
                },
            };
            (sbm_graph(&params, c.seed)?, c.out)
        }
        GenKind::Homophily {
            nodes,
            classes,
            degree,
            homophily,
            common: c,
        } => {
            let params = HomophilyParams {
                num_nodes: nodes,
                num_classes: classes,
                avg_degree: degree,
                homophily,
                num_features: c.features,
                feature_signal: c.signal,
                feature_noise: c.noise,
                splits: SplitRatios {
                    train: c.train,
                    val: c.val,
                },
            };
            (homophily_graph(&params, c.seed)?, c.out)
        }
    };
    save_graph(&g, &out)?;
    println!(
        "wrote {}: {} nodes, {} edges, {} classes, edge homophily {:.4}",
        out.display(),
        g.num_nodes(),
        g.num_edges(),
        g.num_classes(),
        edge_homophily(&g)
    );
    Ok(())
}

fn partition(graph: &Path, clients: usize, method: &str, seed: u64) -> anyhow::Result<()> {
    let method = match method {
        "louvain" => PartitionMethod::Louvain,
        "balanced" => PartitionMethod::Balanced,
        other => bail!(FedError::InvalidArgument(format!("unknown partition method `{other}`"))),
    };
    let g = load_graph(graph)?;
    let p = method.partition(&g, clients, seed)?;
    println!("client\tnodes\tedges\ttrain\tlabels");
    for (k, c) in p.clients.iter().enumerate() {
        let mut hist = vec![0usize; g.num_classes()];
        for &l in c.graph.labels() {
            hist[l] += 1;
        }
        let hist: Vec<String> = hist.iter().map(|h| h.to_string()).collect();
        println!(
            "{k}\t{}\t{}\t{}\t{}",
            c.graph.num_nodes(),
            c.graph.num_edges(),
            c.graph.nodes_in(Split::Train).len(),
            hist.join(",")
        );
    }
    let kept: usize = p.clients.iter().map(|c| c.graph.num_edges()).sum();
    println!(
        "modularity {:.4}; {} of {} edges kept inside clients",
        modularity(&g, &p.assignment),
        kept,
        g.num_edges()
    );
    Ok(())
}

fn run(graph: &Path, config: Option<&Path>, overrides: &[String], out: &Path, seed: Option<u64>) -> anyhow::Result<()> {
    let overrides = overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<fedpg_core::Result<Vec<_>>>()?;
    let mut cfg = FederationConfig::load(config, &overrides)?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    println!("{}", cfg.echo());
    let summary = run_experiment(&cfg, graph, out)?;
    println!(
        "{}: final accuracy {:.4}, best {:.4} (round {}), {} bytes up, {} bytes down",
        summary.method,
        summary.final_accuracy,
        summary.best_accuracy,
        summary.best_round,
        summary.total_bytes_up,
        summary.total_bytes_down
    );
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    match err.downcast_ref::<FedError>() {
        Some(e) => {
            let code = e.code();
            (if code.starts_with("CONFIG_") { 2 } else { 1 }, code)
        }
        None => (1, "ERROR"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { kind } => gen_data(kind),
        Command::Partition {
            graph,
            clients,
            method,
            seed,
        } => partition(&graph, clients, &method, seed),
        Command::Run {
            graph,
            config,
            overrides,
            out,
            seed,
        } => run(&graph, config.as_deref(), &overrides, &out, seed),
        Command::Report { runs, curves } => report::report(&runs, &curves).map(|table| print!("{table}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (status, code) = exit_code(&e);
            // FedError messages already embed their source; anyhow's
            // alternate form would repeat it.
            let msg = match e.downcast_ref::<FedError>() {
                Some(f) => f.to_string(),
                None => format!("{e:#}"),
            }
            .replace('\n', " ");
            eprintln!("error {code}: {msg}");
            ExitCode::from(status)
        }
    }
}
