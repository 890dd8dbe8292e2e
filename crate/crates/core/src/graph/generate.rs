//! Synthetic labelled graphs: a stochastic block model and a generator with
//! a target edge homophily. Node features are class-conditional Gaussians.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Graph, Split};
use crate::error::{FedError, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.2, val: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    /// One block per class.
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub num_features: usize,
    /// Scale of the per-class feature means.
    pub feature_signal: f64,
    pub feature_noise: f64,
    pub splits: SplitRatios,
}

impl Default for SbmParams {
    fn default() -> Self {
        SbmParams {
            block_sizes: vec![50; 4],
            p_in: 0.1,
            p_out: 0.01,
            num_features: 16,
            feature_signal: 1.0,
            feature_noise: 1.0,
            splits: SplitRatios::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilyParams {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub avg_degree: f64,
    /// Target fraction of edges joining same-label endpoints.
    pub homophily: f64,
    pub num_features: usize,
    pub feature_signal: f64,
    pub feature_noise: f64,
    pub splits: SplitRatios,
}

impl Default for HomophilyParams {
    fn default() -> Self {
        HomophilyParams {
            num_nodes: 1000,
            num_classes: 5,
            avg_degree: 6.0,
            homophily: 0.7,
            num_features: 64,
            feature_signal: 1.0,
            feature_noise: 1.0,
            splits: SplitRatios::default(),
        }
    }
}

fn check_fraction(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(FedError::InvalidArgument(format!("{name} = {x} not in [0, 1]")))
    }
}

fn check_splits(s: &SplitRatios) -> Result<()> {
    check_fraction("train ratio", s.train)?;
    check_fraction("val ratio", s.val)?;
    if s.train + s.val > 1.0 {
        return Err(FedError::InvalidArgument("train + val ratio exceeds 1".into()));
    }
    Ok(())
}

fn class_features(
    labels: &[usize],
    num_classes: usize,
    num_features: usize,
    signal: f64,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Matrix {
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| {
            (0..num_features)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    signal * z
                })
                .collect()
        })
        .collect();
    let mut x = Matrix::zeros(labels.len(), num_features);
    for (i, &y) in labels.iter().enumerate() {
        for (v, m) in x.row_mut(i).iter_mut().zip(&means[y]) {
            let z: f64 = StandardNormal.sample(rng);
            *v = m + noise * z;
        }
    }
    x
}

fn random_splits(n: usize, ratios: &SplitRatios, rng: &mut ChaCha8Rng) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = (ratios.train * n as f64).round() as usize;
    let n_val = ((ratios.val * n as f64).round() as usize).min(n - n_train);
    let mut splits = vec![Split::Test; n];
    for &v in &order[..n_train] {
        splits[v] = Split::Train;
    }
    for &v in &order[n_train..n_train + n_val] {
        splits[v] = Split::Val;
    }
    splits
}

/// Stochastic block model with one block per class.
pub fn sbm_graph(params: &SbmParams, seed: u64) -> Result<Graph> {
    check_fraction("p_in", params.p_in)?;
    check_fraction("p_out", params.p_out)?;
    check_splits(&params.splits)?;
    if params.block_sizes.is_empty() || params.block_sizes.contains(&0) {
        return Err(FedError::InvalidArgument("block sizes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = params
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    let n = labels.len();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] {
                params.p_in
            } else {
                params.p_out
            };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let k = params.block_sizes.len();
    let features = class_features(
        &labels,
        k,
        params.num_features,
        params.feature_signal,
        params.feature_noise,
        &mut rng,
    );
    let splits = random_splits(n, &params.splits, &mut rng);
    Graph::new(k, edges, features, labels, splits)
}

/// Random graph whose edges join same-label endpoints with probability
/// `homophily`. Labels are uniform over classes.
pub fn homophily_graph(params: &HomophilyParams, seed: u64) -> Result<Graph> {
    check_fraction("homophily", params.homophily)?;
    check_splits(&params.splits)?;
    if params.num_classes < 2 || params.num_nodes < 2 * params.num_classes {
        return Err(FedError::InvalidArgument(
            "need at least 2 classes and 2 nodes per class".into(),
        ));
    }
    if params.avg_degree.is_nan() || params.avg_degree < 0.0 {
        return Err(FedError::InvalidArgument("avg_degree must be >= 0".into()));
    }
    let n = params.num_nodes;
    let k = params.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut rng);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (v, &y) in labels.iter().enumerate() {
        by_class[y].push(v);
    }
    let target = (params.avg_degree * n as f64 / 2.0).round() as usize;
    let max_edges = n * (n - 1) / 2;
    let target = target.min(max_edges / 2);
    let mut seen = std::collections::HashSet::with_capacity(target * 2);
    let mut edges = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while edges.len() < target && attempts < 50 * target + 100 {
        attempts += 1;
        let u = rng.gen_range(0..n);
        let same = rng.gen::<f64>() < params.homophily;
        let v = if same {
            let pool = &by_class[labels[u]];
            pool[rng.gen_range(0..pool.len())]
        } else {
            let mut c = rng.gen_range(0..k - 1);
            if c >= labels[u] {
                c += 1;
            }
            let pool = &by_class[c];
            pool[rng.gen_range(0..pool.len())]
        };
        if u == v {
            continue;
        }
        let e = (u.min(v), u.max(v));
        if seen.insert(e) {
            edges.push(e);
        }
    }
    let features = class_features(
        &labels,
        k,
        params.num_features,
        params.feature_signal,
        params.feature_noise,
        &mut rng,
    );
    let splits = random_splits(n, &params.splits, &mut rng);
    Graph::new(k, edges, features, labels, splits)
}

/// Fraction of (non-loop) edges whose endpoints share a label.
pub fn edge_homophily(g: &Graph) -> f64 {
    if g.num_edges() == 0 {
        return 1.0;
    }
    let same = g
        .edges()
        .iter()
        .filter(|(u, v)| g.labels()[*u] == g.labels()[*v])
        .count();
    same as f64 / g.num_edges() as f64
}
