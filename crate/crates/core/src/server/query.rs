use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FedError, Result};
use crate::linalg::{dot, norm2};
use crate::proto::PrototypeSet;
use crate::seed::derive_seed;

/// Cosine similarity clamped to `[-1, 1]`. A zero-norm input is an error.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (norm2(a), norm2(b));
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(FedError::DegeneratePrototype(format!(
            "cosine of vectors with norms {na} and {nb}"
        )));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Per-class center: the unweighted mean of every uploaded prototype of
/// that class, over all clients and hops.
pub fn class_centers(uploads: &[&PrototypeSet]) -> BTreeMap<usize, Vec<f64>> {
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for set in uploads {
        for p in set.iter() {
            let e = sums.entry(p.class).or_insert_with(|| (vec![0.0; p.vector.len()], 0));
            for (acc, x) in e.0.iter_mut().zip(&p.vector) {
                *acc += x;
            }
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(c, (mut v, n))| {
            v.iter_mut().for_each(|x| *x /= n as f64);
            (c, v)
        })
        .collect()
}

/// `min(max pairwise cosine between class centers, eps)`; zero when fewer
/// than two classes are present.
pub fn adaptive_margin(centers: &BTreeMap<usize, Vec<f64>>, eps: f64) -> Result<f64> {
    let vs: Vec<&Vec<f64>> = centers.values().collect();
    if vs.len() < 2 {
        return Ok(0.0);
    }
    let mut best = f64::NEG_INFINITY;
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            best = best.max(cosine_similarity(vs[i], vs[j])?);
        }
    }
    Ok(best.min(eps))
}

/// Positive and negative query prototypes for one `(class, hop)` anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBatch {
    pub class: usize,
    pub hop: usize,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
    pub margin: f64,
}

fn augment(base: Vec<Vec<f64>>, pool: Vec<Vec<f64>>, ratio: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let k = ((ratio * base.len() as f64).ceil() as usize).min(pool.len());
    let mut out = base;
    if k > 0 {
        let mut picked = sample(rng, pool.len(), k).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| pool[i].clone()));
    }
    out
}

/// Builds one query batch per `(class, hop)` with at least one uploaded
/// positive. Positives are same-class same-hop uploads, augmented with
/// `ceil(ratio * base)` same-class prototypes of other hops drawn without
/// replacement; negatives are built the same way from other classes.
pub fn build_query_sets(
    uploads: &[&PrototypeSet],
    num_classes: usize,
    num_hops: usize,
    augment_ratio: f64,
    margin: f64,
    seed: u64,
) -> Vec<QueryBatch> {
    let mut batches = Vec::new();
    for c in 0..num_classes {
        for h in 0..num_hops {
            let (mut pos, mut pos_pool, mut neg, mut neg_pool) = (vec![], vec![], vec![], vec![]);
            for set in uploads {
                for p in set.iter() {
                    let v = p.vector.clone();
                    match (p.class == c, p.hop == h) {
                        (true, true) => pos.push(v),
                        (true, false) => pos_pool.push(v),
                        (false, true) => neg.push(v),
                        (false, false) => neg_pool.push(v),
                    }
                }
            }
            if pos.is_empty() {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[c as u64, h as u64]));
            let positives = augment(pos, pos_pool, augment_ratio, &mut rng);
            let negatives = augment(neg, neg_pool, augment_ratio, &mut rng);
            batches.push(QueryBatch {
                class: c,
                hop: h,
                positives,
                negatives,
                margin,
            });
        }
    }
    batches
}
