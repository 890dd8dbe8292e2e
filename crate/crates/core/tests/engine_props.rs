mod common;

use common::{toy_config, toy_graph};
use fedpg_core::engine::{
    fedavg_aggregate, global_accuracy, metrics_csv, run_on_graph, write_outputs, ClientMetric, Federation, Method,
};
use fedpg_core::graph::Split;
use fedpg_core::linalg::Matrix;
use fedpg_core::proto::{PrototypeSet, PROTOTYPE_HEADER_BYTES};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn method() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("fedpg"), Just("fedproto-naive"), Just("fedavg")]
}

fn params(fed: &Federation, id: usize) -> Vec<Matrix> {
    let m = &fed.clients[id].model;
    m.backbone
        .params()
        .into_iter()
        .chain(m.scorer.params())
        .cloned()
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ledger_conserves_bytes(seed in 0u64..1000, m in method(), ratio in prop_oneof![Just("1.0"), Just("0.5")]) {
        let cfg = toy_config(&[("method", m), ("participation_ratio", ratio), ("rounds", "2")]).with_seed(seed);
        let mut fed = Federation::from_graph(cfg.clone(), &toy_graph(seed)).unwrap();
        for t in 1..=2 {
            let participants = fed.run_round().unwrap().participants.clone();
            let mut dedup = participants.clone();
            dedup.dedup();
            prop_assert_eq!(&dedup, &participants);
            let expect = (cfg.participation_ratio * cfg.num_clients as f64).ceil() as usize;
            prop_assert_eq!(participants.len(), expect);

            let rows: Vec<_> = fed.ledger.round(t).cloned().collect();
            prop_assert_eq!(rows.len(), cfg.num_clients);
            let up: u64 = rows.iter().map(|r| r.bytes_up).sum();
            let down: u64 = rows.iter().map(|r| r.bytes_down).sum();
            prop_assert_eq!(up, fed.ledger.server_received[t - 1]);
            prop_assert_eq!(down, fed.ledger.server_sent[t - 1]);
            for r in &rows {
                if !participants.contains(&r.client_id) {
                    prop_assert_eq!((r.bytes_up, r.bytes_down), (0, 0));
                }
            }
            if cfg.method != Method::FedAvg {
                for (id, bytes) in &fed.last_uploads {
                    let n = PrototypeSet::decode(bytes, cfg.proto_dim).unwrap().len() as u64;
                    let row = rows.iter().find(|r| r.client_id == *id).unwrap();
                    prop_assert_eq!(row.bytes_up, n * (PROTOTYPE_HEADER_BYTES as u64 + 8 * cfg.proto_dim as u64));
                }
            }
        }
    }

    #[test]
    fn skipped_clients_keep_their_weights(seed in 0u64..1000, m in method()) {
        let cfg = toy_config(&[("method", m), ("participation_ratio", "0.4"), ("num_clients", "4")]).with_seed(seed);
        let mut fed = Federation::from_graph(cfg, &toy_graph(seed)).unwrap();
        for _ in 0..2 {
            let before: Vec<_> = (0..4).map(|i| params(&fed, i)).collect();
            let participants = fed.run_round().unwrap().participants.clone();
            for (i, b) in before.iter().enumerate() {
                if !participants.contains(&i) {
                    prop_assert!(&params(&fed, i) == b, "client {} changed", i);
                }
            }
        }
    }

    #[test]
    fn global_accuracy_recomputes_from_metrics(seed in 0u64..1000, m in method()) {
        let cfg = toy_config(&[("method", m)]).with_seed(seed);
        let (fed, _) = run_on_graph(&cfg, &toy_graph(seed)).unwrap();
        let csv = metrics_csv(&fed.history);
        for h in &fed.history {
            let rows: Vec<ClientMetric> = csv
                .lines()
                .skip(1)
                .map(|l| l.split(',').collect::<Vec<_>>())
                .filter(|f| f[0].parse::<usize>().unwrap() == h.round)
                .map(|f| ClientMetric {
                    client_id: f[1].parse().unwrap(),
                    split: Split::parse(f[2]).unwrap(),
                    accuracy: f[3].parse().unwrap(),
                    loss: f[4].parse().unwrap(),
                    num_nodes: f[5].parse().unwrap(),
                })
                .collect();
            // independent recomputation straight from the parsed columns
            let (mut num, mut den) = (0.0, 0.0);
            for r in rows.iter().filter(|r| r.split == Split::Test) {
                num += r.accuracy * r.num_nodes as f64;
                den += r.num_nodes as f64;
            }
            let expect = if den == 0.0 { 0.0 } else { num / den };
            prop_assert!((expect - h.global_test_accuracy).abs() <= 1e-12);
            prop_assert_eq!(global_accuracy(&rows), h.global_test_accuracy);
        }
    }

    #[test]
    fn fedavg_matches_weighted_mean(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models: Vec<(Vec<Matrix>, usize)> = (0..n)
            .map(|_| {
                let m = (0..2)
                    .map(|_| Matrix::random_uniform(2, 3, 1.0, &mut rng))
                    .collect();
                (m, rng.gen_range(1..20))
            })
            .collect();
        let out = fedavg_aggregate(&models).unwrap();
        let total: usize = models.iter().map(|m| m.1).sum();
        for t in 0..2 {
            for k in 0..6 {
                let expect: f64 = models
                    .iter()
                    .map(|(m, w)| m[t].as_slice()[k] * *w as f64 / total as f64)
                    .sum();
                prop_assert!((out[t].as_slice()[k] - expect).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn fedavg_fixed_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = Matrix::random_uniform(3, 2, 1.0, &mut rng);
    let single = fedavg_aggregate(&[(vec![w.clone()], 7)]).unwrap();
    assert_eq!(single[0], w);

    let mut neg = w.clone();
    neg.scale(-1.0);
    let zero = fedavg_aggregate(&[(vec![w.clone()], 4), (vec![neg], 4)]).unwrap();
    assert!(zero[0].as_slice().iter().all(|&x| x == 0.0));

    let a = Matrix::from_vec(1, 2, vec![1.0, 2.0]);
    let b = Matrix::from_vec(1, 2, vec![4.0, -1.0]);
    let c = Matrix::from_vec(1, 2, vec![0.0, 0.5]);
    let out = fedavg_aggregate(&[(vec![a], 1), (vec![b], 2), (vec![c], 1)]).unwrap();
    assert!((out[0].as_slice()[0] - 2.25).abs() < 1e-15);
    assert!((out[0].as_slice()[1] - 0.125).abs() < 1e-15);

    let bad = fedavg_aggregate(&[(vec![Matrix::zeros(1, 2)], 1), (vec![Matrix::zeros(2, 1)], 1)]);
    assert_eq!(bad.unwrap_err().code(), "ARCHITECTURE_MISMATCH");
}

/// With one hop, no generator, uniform attention and alpha = 1 the
/// prototype pipeline has nothing left that differs from plain averaging.
#[test]
fn degenerate_fedpg_uploads_equal_naive() {
    for seed in 0..3 {
        let g = toy_graph(seed);
        let shared = [
            ("hops", "0"),
            ("alpha", "1.0"),
            ("lambda", "0.0"),
            ("server_epochs", "0"),
            ("uniform_attention", "true"),
            ("gpg_bypass", "true"),
        ];
        let mut a = Federation::from_graph(
            toy_config(&[&shared[..], &[("method", "fedpg")]].concat()).with_seed(seed),
            &g,
        )
        .unwrap();
        let mut b = Federation::from_graph(
            toy_config(&[&shared[..], &[("method", "fedproto-naive")]].concat()).with_seed(seed),
            &g,
        )
        .unwrap();
        for _ in 0..3 {
            a.run_round().unwrap();
            b.run_round().unwrap();
            assert_eq!(a.last_uploads, b.last_uploads, "seed {seed} round {}", a.round());
        }
    }
}

#[test]
fn lone_client_with_alpha_zero_targets_itself() {
    for m in ["fedpg", "fedproto-naive"] {
        let cfg = toy_config(&[("method", m), ("num_clients", "1"), ("alpha", "0.0")]);
        let mut fed = Federation::from_graph(cfg.clone(), &toy_graph(5)).unwrap();
        fed.run_round().unwrap();
        let own = PrototypeSet::decode(&fed.last_uploads[0].1, cfg.proto_dim).unwrap();
        assert_eq!(fed.clients[0].targets.as_ref().unwrap(), &own);
    }
}

#[test]
fn shorter_run_is_a_prefix() {
    for m in ["fedpg", "fedproto-naive", "fedavg"] {
        let g = toy_graph(9);
        let (short, _) = run_on_graph(&toy_config(&[("method", m), ("rounds", "1")]), &g).unwrap();
        let (long, _) = run_on_graph(&toy_config(&[("method", m), ("rounds", "2")]), &g).unwrap();
        assert_eq!(short.history[0], long.history[0]);
        let first: Vec<_> = long.ledger.round(1).cloned().collect();
        assert_eq!(short.ledger.entries, first);
    }
}

#[test]
fn reruns_write_identical_csvs() {
    let g = toy_graph(2);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let cfg = toy_config(&[("participation_ratio", "0.7")]);
        let (fed, summary) = run_on_graph(&cfg, &g).unwrap();
        write_outputs(&fed, &summary, d.path()).unwrap();
    }
    for name in ["metrics.csv", "ledger.csv"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name}");
    }
}
