//! Local graph models: an embedding part `f`, a prediction head `g`, and a
//! projection of the embedding into the shared prototype space.

mod blob;
mod local;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};
use crate::graph::Graph;
use crate::linalg::{Csr, Matrix};

pub use blob::{decode_tensors, encode_tensors};
pub use local::{
    accuracy_and_loss, local_loss, predict, softmax_rows, train_epoch, ClientModel, LocalData, LossParts, ModelGrads,
    ProtoObjective, TrainSignal,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BackboneKind {
    /// `Â^L X` followed by linear `f` and linear `g` (SGC style).
    PropagatedLinear { layers: usize },
    /// `relu(Â X W1)` as `f`, then `Â H W2` as `g` (two-layer GCN).
    MessagePassing2,
}

impl BackboneKind {
    /// Number of message-passing hops the model sees.
    pub fn layers(&self) -> usize {
        match self {
            BackboneKind::PropagatedLinear { layers } => *layers,
            BackboneKind::MessagePassing2 => 2,
        }
    }

    pub fn name(&self) -> String {
        match self {
            BackboneKind::PropagatedLinear { layers } => format!("propagated-linear-{layers}"),
            BackboneKind::MessagePassing2 => "message-passing-2layer".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneDims {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
    pub proto_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub kind: BackboneKind,
    pub dims: BackboneDims,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub proj: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneGrads {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub proj: Matrix,
}

/// Graph-dependent inputs that never change during training.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    a_hat: Csr,
    /// `Â^L X` for propagated-linear, `Â X` for message passing.
    propagated: Matrix,
}

impl PreparedGraph {
    pub fn new(g: &Graph, kind: BackboneKind) -> Self {
        let a_hat = g.sym_normalized_adjacency();
        let steps = match kind {
            BackboneKind::PropagatedLinear { layers } => layers,
            BackboneKind::MessagePassing2 => 1,
        };
        let mut propagated = g.features().clone();
        for _ in 0..steps {
            propagated = a_hat.spmm(&propagated);
        }
        PreparedGraph { a_hat, propagated }
    }

    pub fn num_nodes(&self) -> usize {
        self.propagated.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.propagated.cols()
    }
}

/// Forward activations kept for back-propagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pre: Option<Matrix>,
    pub hidden: Matrix,
    agg: Option<Matrix>,
    pub logits: Matrix,
    pub projected: Matrix,
}

impl Backbone {
    pub fn new<R: Rng + ?Sized>(kind: BackboneKind, dims: BackboneDims, rng: &mut R) -> Self {
        Backbone {
            kind,
            dims,
            w1: Matrix::glorot(dims.input, dims.hidden, rng),
            b1: Matrix::zeros(1, dims.hidden),
            w2: Matrix::glorot(dims.hidden, dims.classes, rng),
            b2: Matrix::zeros(1, dims.classes),
            proj: Matrix::glorot(dims.hidden, dims.proto_dim, rng),
        }
    }

    /// Builds a backbone from explicit weights, checking every shape.
    pub fn from_weights(
        kind: BackboneKind,
        w1: Matrix,
        b1: Matrix,
        w2: Matrix,
        b2: Matrix,
        proj: Matrix,
    ) -> Result<Self> {
        let dims = BackboneDims {
            input: w1.rows(),
            hidden: w1.cols(),
            classes: w2.cols(),
            proto_dim: proj.cols(),
        };
        let ok = b1.shape() == (1, dims.hidden)
            && w2.rows() == dims.hidden
            && b2.shape() == (1, dims.classes)
            && proj.rows() == dims.hidden;
        if !ok {
            return Err(FedError::Dimension(format!(
                "inconsistent backbone weights: w1 {:?} b1 {:?} w2 {:?} b2 {:?} proj {:?}",
                w1.shape(),
                b1.shape(),
                w2.shape(),
                b2.shape(),
                proj.shape()
            )));
        }
        Ok(Backbone {
            kind,
            dims,
            w1,
            b1,
            w2,
            b2,
            proj,
        })
    }

    pub fn layers(&self) -> usize {
        self.kind.layers()
    }

    pub fn forward(&self, prep: &PreparedGraph) -> Result<ForwardCache> {
        if prep.input_dim() != self.dims.input {
            return Err(FedError::Dimension(format!(
                "graph has {} features, backbone expects {}",
                prep.input_dim(),
                self.dims.input
            )));
        }
        let mut pre = prep.propagated.matmul(&self.w1);
        pre.add_row_vector(self.b1.as_slice());
        Ok(match self.kind {
            BackboneKind::PropagatedLinear { .. } => {
                let mut logits = pre.matmul(&self.w2);
                logits.add_row_vector(self.b2.as_slice());
                let projected = pre.matmul(&self.proj);
                ForwardCache {
                    pre: None,
                    hidden: pre,
                    agg: None,
                    logits,
                    projected,
                }
            }
            BackboneKind::MessagePassing2 => {
                let mut hidden = pre.clone();
                hidden.map_inplace(|x| x.max(0.0));
                let agg = prep.a_hat.spmm(&hidden);
                let mut logits = agg.matmul(&self.w2);
                logits.add_row_vector(self.b2.as_slice());
                let projected = hidden.matmul(&self.proj);
                ForwardCache {
                    pre: Some(pre),
                    hidden,
                    agg: Some(agg),
                    logits,
                    projected,
                }
            }
        })
    }

    /// Gradients of a scalar loss given its derivatives w.r.t. the logits
    /// and the projected embeddings.
    pub fn backward(
        &self,
        prep: &PreparedGraph,
        cache: &ForwardCache,
        d_logits: &Matrix,
        d_projected: Option<&Matrix>,
    ) -> BackboneGrads {
        let b2 = Matrix::from_vec(1, d_logits.cols(), d_logits.column_sums());
        let (w2, mut d_hidden) = match self.kind {
            BackboneKind::PropagatedLinear { .. } => (cache.hidden.t_matmul(d_logits), d_logits.matmul_t(&self.w2)),
            BackboneKind::MessagePassing2 => {
                let agg = cache.agg.as_ref().expect("message-passing cache");
                let d_agg = d_logits.matmul_t(&self.w2);
                (agg.t_matmul(d_logits), prep.a_hat.spmm(&d_agg))
            }
        };
        let proj = match d_projected {
            Some(dz) => {
                d_hidden.add_assign(&dz.matmul_t(&self.proj));
                cache.hidden.t_matmul(dz)
            }
            None => Matrix::zeros(self.proj.rows(), self.proj.cols()),
        };
        if let Some(pre) = &cache.pre {
            for (d, &p) in d_hidden.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                if p <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let w1 = prep.propagated.t_matmul(&d_hidden);
        let b1 = Matrix::from_vec(1, d_hidden.cols(), d_hidden.column_sums());
        BackboneGrads { w1, b1, w2, b2, proj }
    }

    pub fn params(&self) -> [&Matrix; 5] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.proj]
    }

    pub fn params_mut(&mut self) -> [&mut Matrix; 5] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.proj]
    }

    /// The tensors exchanged by weight averaging: `f` and `g`.
    pub fn shared_tensors(&self) -> [&Matrix; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn set_shared_tensors(&mut self, tensors: &[Matrix]) -> Result<()> {
        let [w1, b1, w2, b2] = tensors else {
            return Err(FedError::Dimension(format!(
                "expected 4 tensors, got {}",
                tensors.len()
            )));
        };
        for (cur, new) in [&self.w1, &self.b1, &self.w2, &self.b2].iter().zip([w1, b1, w2, b2]) {
            if cur.shape() != new.shape() {
                return Err(FedError::ArchitectureMismatch(format!(
                    "tensor shape {:?} vs {:?}",
                    cur.shape(),
                    new.shape()
                )));
            }
        }
        self.w1 = w1.clone();
        self.b1 = b1.clone();
        self.w2 = w2.clone();
        self.b2 = b2.clone();
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|m| m.len()).sum()
    }
}

impl BackboneGrads {
    pub fn into_array(self) -> [Matrix; 5] {
        [self.w1, self.b1, self.w2, self.b2, self.proj]
    }
}
