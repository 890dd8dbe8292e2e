//! Client-side prototype construction.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scorer::{AttentionScorer, ScorerCache, ScorerGrads};
use super::{Prototype, PrototypeSet};
use crate::graph::{EffectiveLabels, Graph};
use crate::linalg::{norm2, Matrix};

/// How the attention-weighted neighborhood sum is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// `Σ_j w_j z_j`; the softmax weights already sum to one.
    #[default]
    Softmax,
    /// `Σ_j w_j z_j / |N|`, the formula taken verbatim.
    Literal,
}

/// Labels for prototype construction. Supervised nodes keep their ground
/// truth; any other node receives its argmax prediction when the top soft
/// label reaches `threshold`, and `None` otherwise.
pub fn pseudo_annotate(soft_labels: &Matrix, g: &Graph, threshold: f64) -> EffectiveLabels {
    (0..g.num_nodes())
        .map(|v| {
            if g.supervised()[v] {
                return Some(g.labels()[v]);
            }
            let (arg, max) = argmax(soft_labels.row(v));
            (max >= threshold).then_some(arg)
        })
        .collect()
}

/// Index and value of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(row: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (j, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = j;
        }
    }
    (best, row[best])
}

/// Per-class mean of projected embeddings over usable nodes (hop 0 only).
/// Classes without usable nodes are omitted.
pub fn naive_local_prototypes(z: &Matrix, labels: &[Option<usize>]) -> PrototypeSet {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (v, y) in labels.iter().enumerate() {
        if let Some(c) = y {
            groups.entry(*c).or_default().push(v);
        }
    }
    groups
        .into_iter()
        .map(|(class, nodes)| {
            let mut sum = vec![0.0; z.cols()];
            for &v in &nodes {
                for (s, x) in sum.iter_mut().zip(z.row(v)) {
                    *s += x;
                }
            }
            let count = nodes.len() as f64;
            sum.iter_mut().for_each(|s| *s /= count);
            Prototype {
                class,
                hop: 0,
                vector: sum,
                support: nodes.len(),
            }
        })
        .collect()
}

/// An anchor node and the same-class nodes within its hop radius.
pub type Member = (usize, Vec<usize>);
type Groups = BTreeMap<(usize, usize), Vec<Member>>;

/// Same-class k-hop neighborhoods for every labelled anchor, grouped by
/// `(class, hop)` with anchors in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhoods {
    max_hop: usize,
    groups: Groups,
}

impl Neighborhoods {
    pub fn build(g: &Graph, labels: &[Option<usize>], max_hop: usize) -> Self {
        let mut groups = Groups::new();
        for (anchor, y) in labels.iter().enumerate() {
            let Some(c) = *y else { continue };
            let dist = if max_hop > 0 {
                g.hop_distances(anchor, max_hop)
            } else {
                Vec::new()
            };
            for h in 0..=max_hop {
                let members = if h == 0 {
                    vec![anchor]
                } else {
                    dist.iter()
                        .enumerate()
                        .filter(|&(u, d)| u == anchor || (d.is_some_and(|d| d <= h) && labels[u] == Some(c)))
                        .map(|(u, _)| u)
                        .collect()
                };
                groups.entry((c, h)).or_default().push((anchor, members));
            }
        }
        Neighborhoods { max_hop, groups }
    }

    pub fn max_hop(&self) -> usize {
        self.max_hop
    }

    pub fn groups(&self) -> impl Iterator<Item = ((usize, usize), &[Member])> {
        self.groups.iter().map(|(k, v)| (*k, v.as_slice()))
    }
}

#[derive(Debug, Clone)]
struct AnchorRecord {
    weights: Vec<f64>,
    weighted_sum: Vec<f64>,
    /// `1/|S_c|`, times `1/|N|` under literal normalization.
    coeff: f64,
}

/// Forward record of topology-aware prototype construction.
#[derive(Debug, Clone)]
pub struct PrototypeTape {
    scorer: ScorerCache,
    records: BTreeMap<(usize, usize), Vec<AnchorRecord>>,
}

/// Topology-aware prototypes: for every `(class, hop)`, the mean over anchors
/// of the attention-weighted sum of the anchor's same-class neighborhood.
/// At hop 0 this is exactly [`naive_local_prototypes`].
pub fn topology_aware_prototypes(
    z: &Matrix,
    neighborhoods: &Neighborhoods,
    scorer: &AttentionScorer,
    norm: Normalization,
) -> PrototypeSet {
    PrototypeTape::record(z, neighborhoods, scorer, norm).0
}

impl PrototypeTape {
    pub fn record(
        z: &Matrix,
        neighborhoods: &Neighborhoods,
        scorer: &AttentionScorer,
        norm: Normalization,
    ) -> (PrototypeSet, PrototypeTape) {
        let cache = scorer.forward(z);
        let p = z.cols();
        let mut set = PrototypeSet::new();
        let mut records = BTreeMap::new();
        for ((class, hop), anchors) in neighborhoods.groups() {
            let mut sum = vec![0.0; p];
            let mut recs = Vec::with_capacity(anchors.len());
            let count = anchors.len() as f64;
            for (_, members) in anchors {
                let weights = softmax_of(members.iter().map(|&j| cache.scores[j]));
                let mut weighted_sum = vec![0.0; p];
                for (&j, &w) in members.iter().zip(&weights) {
                    for (acc, x) in weighted_sum.iter_mut().zip(z.row(j)) {
                        *acc += w * x;
                    }
                }
                let mut coeff = 1.0 / count;
                match norm {
                    Normalization::Softmax => {
                        for (s, x) in sum.iter_mut().zip(&weighted_sum) {
                            *s += x;
                        }
                    }
                    Normalization::Literal => {
                        let l = members.len() as f64;
                        coeff /= l;
                        for (s, x) in sum.iter_mut().zip(&weighted_sum) {
                            *s += x / l;
                        }
                    }
                }
                recs.push(AnchorRecord {
                    weights,
                    weighted_sum,
                    coeff,
                });
            }
            sum.iter_mut().for_each(|s| *s /= count);
            set.insert(Prototype {
                class,
                hop,
                vector: sum,
                support: anchors.len(),
            });
            records.insert((class, hop), recs);
        }
        (set, PrototypeTape { scorer: cache, records })
    }

    /// Attention weights of every anchor's neighborhood, keyed by `(class, hop)`.
    pub fn attention_weights(&self) -> impl Iterator<Item = ((usize, usize), Vec<&[f64]>)> {
        self.records
            .iter()
            .map(|(k, recs)| (*k, recs.iter().map(|r| r.weights.as_slice()).collect()))
    }

    /// Back-propagates `dL/dP_{c,h}` into `dz` and the scorer parameters.
    pub fn backward(
        &self,
        z: &Matrix,
        neighborhoods: &Neighborhoods,
        scorer: &AttentionScorer,
        upstream: &BTreeMap<(usize, usize), Vec<f64>>,
        dz: &mut Matrix,
    ) -> ScorerGrads {
        let mut d_scores = vec![0.0; z.rows()];
        let mut any_score = false;
        for ((class, hop), anchors) in neighborhoods.groups() {
            let Some(grad) = upstream.get(&(class, hop)) else {
                continue;
            };
            let recs = &self.records[&(class, hop)];
            for ((_, members), rec) in anchors.iter().zip(recs) {
                for (&j, &w) in members.iter().zip(&rec.weights) {
                    let scale = rec.coeff * w;
                    let mut along = 0.0;
                    for ((d, g), (x, s)) in dz
                        .row_mut(j)
                        .iter_mut()
                        .zip(grad)
                        .zip(z.row(j).iter().zip(&rec.weighted_sum))
                    {
                        *d += scale * g;
                        along += (x - s) * g;
                    }
                    if members.len() > 1 {
                        d_scores[j] += scale * along;
                        any_score = true;
                    }
                }
            }
        }
        if any_score {
            scorer.backward(z, &self.scorer, &d_scores, dz)
        } else {
            ScorerGrads::zeros_like(scorer)
        }
    }
}

fn softmax_of(scores: impl Iterator<Item = f64>) -> Vec<f64> {
    let s: Vec<f64> = scores.collect();
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// Adds Gaussian noise to `⌈dim_fraction · p⌉` uniformly chosen dimensions of
/// every prototype, with standard deviation `sigma_rel · ‖v‖ / √p`.
pub fn add_prototype_noise(protos: &PrototypeSet, dim_fraction: f64, sigma_rel: f64, seed: u64) -> PrototypeSet {
    let mut out = protos.clone();
    if dim_fraction <= 0.0 || sigma_rel <= 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for proto in out.iter_mut() {
        let p = proto.vector.len();
        let k = ((dim_fraction * p as f64).ceil() as usize).min(p);
        let std = sigma_rel * norm2(&proto.vector) / (p as f64).sqrt();
        let dims = rand::seq::index::sample(&mut rng, p, k);
        if std == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, std).expect("finite positive std");
        for d in dims.iter() {
            proto.vector[d] += normal.sample(&mut rng);
        }
    }
    out
}
