use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::query::{cosine_similarity, QueryBatch};
use crate::error::{FedError, Result};
use crate::linalg::{dot, norm2, Matrix};
use crate::proto::{Prototype, PrototypeSet};

/// Trainable prototype grid plus a shared two-layer generator
/// `relu(x W1 + b1) W2 + b2`, all `p`-dimensional.
#[derive(Debug, Clone, PartialEq)]
pub struct GpgState {
    num_classes: usize,
    num_hops: usize,
    pub trainable: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpgGrads {
    pub trainable: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

struct Cache {
    pre: Matrix,
    hidden: Matrix,
    out: Matrix,
}

impl GpgState {
    /// Grid rows are uniform in `[-0.5, 0.5]`; generator weights are Glorot.
    /// The output bias starts small but nonzero so a row whose hidden units
    /// are all inactive still generates a usable (nonzero) prototype.
    pub fn new(num_classes: usize, num_hops: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trainable = Matrix::random_uniform(num_classes * num_hops, dim, 0.5, &mut rng);
        let w1 = Matrix::glorot(dim, dim, &mut rng);
        let w2 = Matrix::glorot(dim, dim, &mut rng);
        let b2 = Matrix::random_uniform(1, dim, 0.1, &mut rng);
        Self {
            num_classes,
            num_hops,
            trainable,
            w1,
            b1: Matrix::zeros(1, dim),
            w2,
            b2,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_hops(&self) -> usize {
        self.num_hops
    }

    pub fn dim(&self) -> usize {
        self.trainable.cols()
    }

    fn row(&self, class: usize, hop: usize) -> usize {
        class * self.num_hops + hop
    }

    fn forward(&self) -> Cache {
        let mut pre = self.trainable.matmul(&self.w1);
        pre.add_row_vector(self.b1.as_slice());
        let mut hidden = pre.clone();
        hidden.map_inplace(|x| x.max(0.0));
        let mut out = hidden.matmul(&self.w2);
        out.add_row_vector(self.b2.as_slice());
        Cache { pre, hidden, out }
    }

    /// Generated prototype for every grid cell, with zero support.
    pub fn universal(&self) -> PrototypeSet {
        let out = self.forward().out;
        let mut set = PrototypeSet::new();
        for c in 0..self.num_classes {
            for h in 0..self.num_hops {
                set.insert(Prototype {
                    class: c,
                    hop: h,
                    vector: out.row(self.row(c, h)).to_vec(),
                    support: 0,
                });
            }
        }
        set
    }

    pub fn params(&self) -> [&Matrix; 5] {
        [&self.trainable, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn params_mut(&mut self) -> [&mut Matrix; 5] {
        [
            &mut self.trainable,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

impl GpgGrads {
    pub fn into_array(self) -> [Matrix; 5] {
        [self.trainable, self.w1, self.b1, self.w2, self.b2]
    }
}

fn cosine_grad(a: &[f64], q: &[f64], cos: f64, out: &mut [f64], weight: f64) {
    let na = norm2(a);
    let nq = norm2(q);
    for ((o, &ai), &qi) in out.iter_mut().zip(a).zip(q) {
        *o += weight * (qi / (na * nq) - cos * ai / (na * na));
    }
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Contrastive loss of one anchor against its queries, and its gradient
/// with respect to the anchor. Positives get the margin added to their
/// cosine; with no negatives the loss is exactly zero.
pub fn batch_loss(anchor: &[f64], batch: &QueryBatch) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; anchor.len()];
    if batch.negatives.is_empty() || batch.positives.is_empty() {
        return Ok((0.0, grad));
    }
    let pos: Vec<f64> = batch
        .positives
        .iter()
        .map(|q| cosine_similarity(anchor, q).map(|d| d + batch.margin))
        .collect::<Result<_>>()?;
    let neg: Vec<f64> = batch
        .negatives
        .iter()
        .map(|q| cosine_similarity(anchor, q))
        .collect::<Result<_>>()?;
    let all: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    let lse_all = logsumexp(&all);
    let lse_pos = logsumexp(&pos);
    let loss = lse_all - lse_pos;

    // Clamped cosines have zero gradient only at exactly +-1; the
    // analytic form below is used everywhere for simplicity.
    for (q, &u) in batch.positives.iter().zip(&pos) {
        let w = (u - lse_all).exp() - (u - lse_pos).exp();
        cosine_grad(anchor, q, u - batch.margin, &mut grad, w);
    }
    for (q, &v) in batch.negatives.iter().zip(&neg) {
        let w = (v - lse_all).exp();
        cosine_grad(anchor, q, v, &mut grad, w);
    }
    Ok((loss, grad))
}

/// Summed contrastive loss over `batches` and its gradient with respect to
/// the grid and generator.
pub fn contrastive_loss(state: &GpgState, batches: &[QueryBatch]) -> Result<(f64, GpgGrads)> {
    let cache = state.forward();
    let mut d_out = Matrix::zeros(cache.out.rows(), cache.out.cols());
    let mut total = 0.0;
    for b in batches {
        if b.class >= state.num_classes || b.hop >= state.num_hops {
            return Err(FedError::Dimension(format!(
                "query ({}, {}) outside the {}x{} grid",
                b.class, b.hop, state.num_classes, state.num_hops
            )));
        }
        let r = state.row(b.class, b.hop);
        let anchor = cache.out.row(r);
        if dot(anchor, anchor) == 0.0 {
            return Err(FedError::DegeneratePrototype(format!(
                "generated prototype ({}, {}) is zero",
                b.class, b.hop
            )));
        }
        let (loss, g) = batch_loss(anchor, b)?;
        total += loss;
        for (d, x) in d_out.row_mut(r).iter_mut().zip(&g) {
            *d += x;
        }
    }

    let w2 = cache.hidden.t_matmul(&d_out);
    let b2 = Matrix::from_vec(1, d_out.cols(), d_out.column_sums());
    let mut d_pre = d_out.matmul_t(&state.w2);
    for (d, &p) in d_pre.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
    let w1 = state.trainable.t_matmul(&d_pre);
    let b1 = Matrix::from_vec(1, d_pre.cols(), d_pre.column_sums());
    let trainable = d_pre.matmul_t(&state.w1);
    Ok((
        total,
        GpgGrads {
            trainable,
            w1,
            b1,
            w2,
            b2,
        },
    ))
}

/// Runs `epochs` full-batch gradient steps; returns the loss before each step.
pub fn train_gpg(state: &mut GpgState, batches: &[QueryBatch], epochs: usize, lr: f64) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let (loss, grads) = contrastive_loss(state, batches)?;
        if !loss.is_finite() {
            return Err(FedError::Diverged(format!("generator loss {loss}")));
        }
        losses.push(loss);
        for (p, g) in state.params_mut().into_iter().zip(grads.into_array()) {
            p.sub_scaled(&g, lr);
        }
        if !state.params().iter().all(|p| p.is_finite()) {
            return Err(FedError::Diverged("generator parameters".into()));
        }
    }
    Ok(losses)
}
