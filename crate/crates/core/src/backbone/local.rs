//! Local objective `L = L_ce + μ · L_proto`, its gradients and the
//! full-batch gradient-descent step.

use std::collections::BTreeMap;

use super::{Backbone, BackboneGrads, PreparedGraph};
use crate::error::{FedError, Result};
use crate::graph::{Graph, Split};
use crate::linalg::{norm2, Matrix};
use crate::proto::{AttentionScorer, Neighborhoods, Normalization, PrototypeSet, PrototypeTape, ScorerGrads};

/// A client's trainable state: backbone plus attention scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientModel {
    pub backbone: Backbone,
    pub scorer: AttentionScorer,
    /// When false the scorer stays fixed (e.g. uniform attention).
    pub train_scorer: bool,
    /// Rescale the joint gradient to at most this global norm.
    pub grad_clip: Option<f64>,
}

/// A client's private subgraph with its cached propagation.
#[derive(Debug, Clone)]
pub struct LocalData {
    pub graph: Graph,
    pub prep: PreparedGraph,
    train_nodes: Vec<usize>,
}

impl LocalData {
    pub fn new(graph: Graph, model: &Backbone) -> Self {
        let prep = PreparedGraph::new(&graph, model.kind);
        let train_nodes = graph.supervised_nodes();
        LocalData {
            graph,
            prep,
            train_nodes,
        }
    }

    pub fn train_nodes(&self) -> &[usize] {
        &self.train_nodes
    }
}

/// The prototype-alignment half of the local objective.
#[derive(Debug, Clone, Copy)]
pub struct ProtoObjective<'a> {
    pub targets: &'a PrototypeSet,
    pub neighborhoods: &'a Neighborhoods,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub ce: f64,
    pub proto: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainSignal {
    pub logits: Matrix,
    pub embeddings: Matrix,
    pub projected: Matrix,
    pub losses: LossParts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub backbone: BackboneGrads,
    pub scorer: ScorerGrads,
}

pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        row.iter_mut().for_each(|x| *x /= total);
    }
    out
}

fn log_softmax_at(row: &[f64], j: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row[j] - lse
}

/// Mean cross-entropy over the supervised train nodes, plus `μ` times the
/// summed Frobenius distance between local and target prototypes over the
/// `(class, hop)` pairs present in both. Gradients are exact, including the
/// path through prototype construction into the projection and the scorer.
pub fn local_loss(
    model: &ClientModel,
    data: &LocalData,
    objective: Option<ProtoObjective<'_>>,
    mu: f64,
) -> Result<(TrainSignal, ModelGrads)> {
    let train = data.train_nodes();
    if train.is_empty() {
        return Err(FedError::EmptyTrainSet(format!(
            "no supervised nodes among {}",
            data.graph.num_nodes()
        )));
    }
    let backbone = &model.backbone;
    let cache = backbone.forward(&data.prep)?;
    let labels = data.graph.labels();

    let probs = softmax_rows(&cache.logits);
    let mut d_logits = Matrix::zeros(cache.logits.rows(), cache.logits.cols());
    let inv = 1.0 / train.len() as f64;
    let mut ce = 0.0;
    for &v in train {
        ce -= log_softmax_at(cache.logits.row(v), labels[v]);
        let d = d_logits.row_mut(v);
        d.copy_from_slice(probs.row(v));
        d[labels[v]] -= 1.0;
        d.iter_mut().for_each(|x| *x *= inv);
    }
    ce *= inv;

    let mut proto = 0.0;
    let mut d_projected = None;
    let mut scorer_grads = ScorerGrads::zeros_like(&model.scorer);
    if let Some(obj) = objective {
        let (local, tape) =
            PrototypeTape::record(&cache.projected, obj.neighborhoods, &model.scorer, obj.normalization);
        let mut upstream: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for p in local.iter() {
            let Some(t) = obj.targets.get(p.class, p.hop) else {
                continue;
            };
            let diff: Vec<f64> = p.vector.iter().zip(&t.vector).map(|(a, b)| a - b).collect();
            let dist = norm2(&diff);
            proto += dist;
            if dist > 0.0 && mu != 0.0 {
                upstream.insert((p.class, p.hop), diff.iter().map(|d| mu * d / dist).collect());
            }
        }
        if !upstream.is_empty() {
            let mut dz = Matrix::zeros(cache.projected.rows(), cache.projected.cols());
            scorer_grads = tape.backward(&cache.projected, obj.neighborhoods, &model.scorer, &upstream, &mut dz);
            d_projected = Some(dz);
        }
    }

    let grads = ModelGrads {
        backbone: backbone.backward(&data.prep, &cache, &d_logits, d_projected.as_ref()),
        scorer: scorer_grads,
    };
    let losses = LossParts {
        ce,
        proto,
        total: ce + mu * proto,
    };
    Ok((
        TrainSignal {
            logits: cache.logits,
            embeddings: cache.hidden,
            projected: cache.projected,
            losses,
        },
        grads,
    ))
}

/// One full-batch gradient-descent step. Errors with `Diverged` when the
/// loss or any gradient is not finite; the model is left untouched then.
pub fn train_epoch(
    model: &mut ClientModel,
    data: &LocalData,
    objective: Option<ProtoObjective<'_>>,
    lr: f64,
    mu: f64,
) -> Result<LossParts> {
    let (signal, grads) = local_loss(model, data, objective, mu)?;
    let finite = signal.losses.total.is_finite()
        && grads.backbone.w1.is_finite()
        && grads.backbone.w2.is_finite()
        && grads.backbone.proj.is_finite()
        && grads.scorer.w1.is_finite()
        && grads.scorer.w2.is_finite();
    if !finite {
        return Err(FedError::Diverged(format!(
            "non-finite local loss (ce {}, proto {})",
            signal.losses.ce, signal.losses.proto
        )));
    }
    if lr != 0.0 {
        let backbone_grads = grads.backbone.into_array();
        let scorer_grads = grads.scorer.into_array();
        let mut step = lr;
        if let Some(clip) = model.grad_clip {
            let mut sq: f64 = backbone_grads.iter().map(|g| g.frobenius_sq()).sum();
            if model.train_scorer {
                sq += scorer_grads.iter().map(|g| g.frobenius_sq()).sum::<f64>();
            }
            let norm = sq.sqrt();
            if norm > clip {
                step *= clip / norm;
            }
        }
        for (p, g) in model.backbone.params_mut().into_iter().zip(backbone_grads) {
            p.sub_scaled(&g, step);
        }
        if model.train_scorer {
            for (p, g) in model.scorer.params_mut().into_iter().zip(scorer_grads) {
                p.sub_scaled(&g, step);
            }
        }
    }
    Ok(signal.losses)
}

/// Hard labels (argmax, ties to the lowest class id) and soft labels.
pub fn predict(backbone: &Backbone, prep: &PreparedGraph) -> Result<(Vec<usize>, Matrix)> {
    let cache = backbone.forward(prep)?;
    let soft = softmax_rows(&cache.logits);
    let hard = (0..soft.rows())
        .map(|i| crate::proto::client_argmax(soft.row(i)))
        .collect();
    Ok((hard, soft))
}

/// Accuracy and mean cross-entropy of `logits` on the nodes of `split`, or
/// `None` when the split is empty.
pub fn accuracy_and_loss(logits: &Matrix, g: &Graph, split: Split) -> Option<(f64, f64)> {
    let nodes = g.nodes_in(split);
    if nodes.is_empty() {
        return None;
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    for &v in &nodes {
        let row = logits.row(v);
        if crate::proto::client_argmax(row) == g.labels()[v] {
            correct += 1;
        }
        loss -= log_softmax_at(row, g.labels()[v]);
    }
    let n = nodes.len() as f64;
    Some((correct as f64 / n, loss / n))
}
