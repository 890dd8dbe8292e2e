//! Feature, edge and label sparsity transforms.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, Split};
use crate::error::{FedError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparsityMode {
    /// Zero the features of a random subset of non-train nodes.
    Feature,
    /// Drop each undirected edge independently.
    Edge,
    /// Hide the labels of a random subset of train nodes.
    Label,
}

/// Keeps roughly `keep_ratio` of the selected resource. `keep_ratio = 1`
/// returns an identical graph.
pub fn sparsify(g: &Graph, mode: SparsityMode, keep_ratio: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&keep_ratio) {
        return Err(FedError::InvalidArgument(format!(
            "keep_ratio {keep_ratio} not in [0, 1]"
        )));
    }
    if keep_ratio == 1.0 {
        return Ok(g.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        SparsityMode::Edge => {
            let edges = g
                .edges()
                .iter()
                .copied()
                .filter(|_| rng.gen::<f64>() < keep_ratio)
                .collect();
            Ok(g.with_edges(edges))
        }
        SparsityMode::Feature => {
            let mut pool: Vec<usize> = (0..g.num_nodes()).filter(|&v| g.splits()[v] != Split::Train).collect();
            pool.shuffle(&mut rng);
            let drop = ((1.0 - keep_ratio) * pool.len() as f64).round() as usize;
            let mut out = g.clone();
            for &v in &pool[..drop] {
                out.features_mut().row_mut(v).iter_mut().for_each(|x| *x = 0.0);
            }
            Ok(out)
        }
        SparsityMode::Label => {
            let mut pool = g.supervised_nodes();
            pool.shuffle(&mut rng);
            let drop = ((1.0 - keep_ratio) * pool.len() as f64).round() as usize;
            let mut out = g.clone();
            for &v in &pool[..drop] {
                out.supervised_mut()[v] = false;
            }
            Ok(out)
        }
    }
}
