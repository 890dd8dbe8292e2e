#![allow(dead_code)]

use fedpg_core::backbone::{local_loss, Backbone, BackboneDims, BackboneKind, ClientModel, LocalData, ProtoObjective};
use fedpg_core::graph::{sbm_graph, SbmParams, SplitRatios};
use fedpg_core::linalg::Matrix;
use fedpg_core::proto::{AttentionScorer, Neighborhoods, Normalization, Prototype, PrototypeSet};
use fedpg_core::server::{batch_loss, contrastive_loss, GpgState, QueryBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps entries whose true
/// gradient is zero from dividing finite-difference noise by zero.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Central-difference check of every entry of `params` against `grads`.
fn check_params<F>(params: &mut [Matrix], grads: &[Matrix], mut loss: F) -> f64
where
    F: FnMut(&[Matrix]) -> f64,
{
    let mut worst: f64 = 0.0;
    for t in 0..params.len() {
        for k in 0..params[t].len() {
            let orig = params[t].as_slice()[k];
            params[t].as_mut_slice()[k] = orig + FD_STEP;
            let up = loss(params);
            params[t].as_mut_slice()[k] = orig - FD_STEP;
            let down = loss(params);
            params[t].as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads[t].as_slice()[k], numeric));
        }
    }
    worst
}

/// Worst relative error over every backbone and scorer weight of the local
/// objective on a small random instance.
pub fn local_gradient_error(kind: BackboneKind, normalization: Normalization, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = sbm_graph(
        &SbmParams {
            block_sizes: vec![6, 5, 5],
            p_in: 0.5,
            p_out: 0.1,
            num_features: 4,
            feature_signal: 1.0,
            feature_noise: 1.0,
            splits: SplitRatios { train: 0.5, val: 0.2 },
        },
        seed,
    )
    .unwrap();
    let dims = BackboneDims {
        input: 4,
        hidden: 5,
        classes: 3,
        proto_dim: 3,
    };
    let backbone = Backbone::new(kind, dims, &mut rng);
    let scorer = AttentionScorer::random(3, 4, &mut rng);
    let labels: Vec<Option<usize>> = g.labels().iter().map(|&y| Some(y)).collect();
    let nb = Neighborhoods::build(&g, &labels, 2);
    let targets: PrototypeSet = (0..3)
        .flat_map(|c| (0..3).map(move |h| (c, h)))
        .map(|(class, hop)| Prototype {
            class,
            hop,
            vector: random_vec(&mut rng, 3),
            support: 1,
        })
        .collect();
    let mu = rng.gen_range(0.2..1.5);
    let model = ClientModel {
        backbone,
        scorer,
        train_scorer: true,
        grad_clip: None,
    };
    let data = LocalData::new(g, &model.backbone);
    let obj = ProtoObjective {
        targets: &targets,
        neighborhoods: &nb,
        normalization,
    };
    let (_, grads) = local_loss(&model, &data, Some(obj), mu).unwrap();

    let mut params: Vec<Matrix> = model
        .backbone
        .params()
        .into_iter()
        .chain(model.scorer.params())
        .cloned()
        .collect();
    let grad_list: Vec<Matrix> = grads
        .backbone
        .into_array()
        .into_iter()
        .chain(grads.scorer.into_array())
        .collect();
    let mut probe = model.clone();
    check_params(&mut params, &grad_list, |ps| {
        for (dst, src) in probe
            .backbone
            .params_mut()
            .into_iter()
            .chain(probe.scorer.params_mut())
            .zip(ps)
        {
            dst.clone_from(src);
        }
        local_loss(&probe, &data, Some(obj), mu).unwrap().0.losses.total
    })
}

pub fn random_batch(rng: &mut ChaCha8Rng, class: usize, hop: usize, dim: usize) -> QueryBatch {
    let npos = rng.gen_range(1..5);
    let nneg = rng.gen_range(1..6);
    QueryBatch {
        class,
        hop,
        positives: (0..npos).map(|_| random_vec(rng, dim)).collect(),
        negatives: (0..nneg).map(|_| random_vec(rng, dim)).collect(),
        margin: rng.gen_range(0.0..0.5),
    }
}

/// Worst relative error of the summed contrastive loss gradient with
/// respect to the generator and the trainable grid.
pub fn gpg_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (classes, hops, dim) = (3, 2, 4);
    let state = GpgState::new(classes, hops, dim, seed);
    let batches: Vec<QueryBatch> = (0..classes)
        .flat_map(|c| (0..hops).map(move |h| (c, h)))
        .map(|(c, h)| random_batch(&mut rng, c, h, dim))
        .collect();
    let (_, grads) = contrastive_loss(&state, &batches).unwrap();
    let mut params: Vec<Matrix> = state.params().into_iter().cloned().collect();
    let grad_list: Vec<Matrix> = grads.into_array().into();
    let mut probe = state.clone();
    check_params(&mut params, &grad_list, |ps| {
        for (dst, src) in probe.params_mut().into_iter().zip(ps) {
            dst.clone_from(src);
        }
        contrastive_loss(&probe, &batches).unwrap().0
    })
}

/// Relative error between the implemented loss and
/// `log(1 + sum_neg e^D / sum_pos e^(D + M))`.
pub fn loss_identity_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.gen_range(2..9);
    let batch = random_batch(&mut rng, 0, 0, dim);
    let anchor = random_vec(&mut rng, dim);
    let cos = |q: &[f64]| {
        let d: f64 = anchor.iter().zip(q).map(|(a, b)| a * b).sum();
        let na = anchor.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nq = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        d / (na * nq)
    };
    let neg: f64 = batch.negatives.iter().map(|q| cos(q).exp()).sum();
    let pos: f64 = batch.positives.iter().map(|q| (cos(q) + batch.margin).exp()).sum();
    let oracle = (1.0 + neg / pos).ln();
    let (loss, _) = batch_loss(&anchor, &batch).unwrap();
    (loss - oracle).abs() / oracle.abs()
}

/// Four-block SBM with clearly separable features, small enough for a
/// handful of federated rounds in a test.
pub fn toy_graph(seed: u64) -> fedpg_core::graph::Graph {
    sbm_graph(
        &SbmParams {
            block_sizes: vec![20; 4],
            p_in: 0.25,
            p_out: 0.02,
            num_features: 6,
            feature_signal: 1.0,
            feature_noise: 0.5,
            splits: SplitRatios::default(),
        },
        seed,
    )
    .unwrap()
}

/// Small federation settings; `extra` are `key=value` overrides.
pub fn toy_config(extra: &[(&str, &str)]) -> fedpg_core::engine::FederationConfig {
    let mut ov: Vec<(String, String)> = [
        ("num_clients", "3"),
        ("rounds", "3"),
        ("local_epochs", "3"),
        ("server_epochs", "10"),
        ("proto_dim", "4"),
        ("hidden_dim", "5"),
        ("scorer_hidden", "3"),
        ("lr", "0.05"),
        ("partition", "balanced"),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    ov.extend(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    fedpg_core::engine::FederationConfig::resolve(None, &ov).unwrap()
}
