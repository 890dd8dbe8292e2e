use crate::linalg::{dot, norm2};
use crate::proto::{Prototype, PrototypeSet};

use super::aggregate::naive_global_aggregate;

/// Concatenation of a client's prototypes over the `(class, hop)` grid,
/// with zero blocks where nothing was uploaded.
pub fn signature(set: &PrototypeSet, num_classes: usize, num_hops: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; num_classes * num_hops * dim];
    for p in set.iter() {
        if p.class < num_classes && p.hop < num_hops {
            let at = (p.class * num_hops + p.hop) * dim;
            out[at..at + dim].copy_from_slice(&p.vector);
        }
    }
    out
}

/// Cosine similarity of two client signatures; zero if either is empty.
pub fn client_similarity(a: &PrototypeSet, b: &PrototypeSet, num_classes: usize, num_hops: usize) -> f64 {
    let dim = a.iter().chain(b.iter()).next().map_or(0, |p| p.vector.len());
    let sa = signature(a, num_classes, num_hops, dim);
    let sb = signature(b, num_classes, num_hops, dim);
    let (na, nb) = (norm2(&sa), norm2(&sb));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(&sa, &sb) / (na * nb)).clamp(-1.0, 1.0)
}

/// Rescales each generated prototype to the support-weighted mean norm of
/// the uploads for its `(class, hop)`. The contrastive objective only fixes
/// directions, so without this the generator's arbitrary scale leaks into
/// the clients' alignment targets. Cells nobody uploaded are left as is.
pub fn match_upload_norms(universal: &PrototypeSet, uploads: &[&PrototypeSet]) -> PrototypeSet {
    let mut out = universal.clone();
    for p in out.iter_mut() {
        let (mut num, mut den) = (0.0, 0usize);
        for set in uploads {
            if let Some(q) = set.get(p.class, p.hop) {
                num += q.support as f64 * norm2(&q.vector);
                den += q.support;
            }
        }
        let current = norm2(&p.vector);
        if den > 0 && current > 0.0 {
            let s = num / den as f64 / current;
            p.vector.iter_mut().for_each(|x| *x *= s);
        }
    }
    out
}

/// Per-client targets. Each client `i` trusts itself plus every client
/// whose signature similarity is at least `lambda`; for each `(class, hop)`
/// the target is
/// `alpha * universal + (1 - alpha) * support-weighted mean of trusted uploads`.
/// Where one side is missing the other is used alone, so `alpha = 1`
/// reproduces the universal set exactly.
pub fn personalized_fusion(
    universal: &PrototypeSet,
    uploads: &[&PrototypeSet],
    lambda: f64,
    alpha: f64,
    num_classes: usize,
    num_hops: usize,
) -> Vec<PrototypeSet> {
    let n = uploads.len();
    let mut sim = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let s = client_similarity(uploads[i], uploads[j], num_classes, num_hops);
            sim[i][j] = s;
            sim[j][i] = s;
        }
    }
    (0..n)
        .map(|i| {
            let trusted: Vec<&PrototypeSet> = (0..n)
                .filter(|&j| j == i || sim[i][j] >= lambda)
                .map(|j| uploads[j])
                .collect();
            let mixed = naive_global_aggregate(trusted);
            let mut out: PrototypeSet = universal
                .iter()
                .filter(|u| !mixed.contains(u.class, u.hop))
                .cloned()
                .collect();
            for mix in mixed.iter() {
                let vector = match universal.get(mix.class, mix.hop) {
                    Some(u) => u
                        .vector
                        .iter()
                        .zip(&mix.vector)
                        .map(|(g, m)| alpha * g + (1.0 - alpha) * m)
                        .collect(),
                    None => mix.vector.clone(),
                };
                out.insert(Prototype { vector, ..mix.clone() });
            }
            out
        })
        .collect()
}
