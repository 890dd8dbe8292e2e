//! Graph storage and neighborhood queries.

mod generate;
mod io;
mod partition;
mod sparsify;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};
use crate::linalg::{Csr, Matrix};

pub use generate::{edge_homophily, homophily_graph, sbm_graph, HomophilyParams, SbmParams, SplitRatios};
pub use io::{load_graph, save_graph};
pub use partition::{
    balanced_partition, louvain_communities, louvain_partition, modularity, ClientSubgraph, LouvainTrace, Partition,
    PartitionMethod, Partitioner,
};
pub use sparsify::{sparsify, SparsityMode};

/// Per-node split tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Label vector used for prototype construction: `None` marks a node that
/// may not contribute (unlabeled and below the pseudo-label threshold).
pub type EffectiveLabels = Vec<Option<usize>>;

/// Undirected attributed graph. Edges are stored once as `(u, v)` with
/// `u < v`; the adjacency carries exactly one self-loop per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_classes: usize,
    edges: Vec<(usize, usize)>,
    features: Matrix,
    labels: Vec<usize>,
    splits: Vec<Split>,
    supervised: Vec<bool>,
    adjacency: Csr,
}

impl Graph {
    /// Builds a graph, symmetrizing and de-duplicating `edges`. Self-loop
    /// edges in the input are absorbed by the implicit self-loop.
    pub fn new(
        num_classes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix,
        labels: Vec<usize>,
        splits: Vec<Split>,
    ) -> Result<Graph> {
        let n = labels.len();
        if features.rows() != n {
            return Err(FedError::Dimension(format!(
                "{} feature rows for {} nodes",
                features.rows(),
                n
            )));
        }
        if splits.len() != n {
            return Err(FedError::Dimension(format!(
                "{} split tags for {} nodes",
                splits.len(),
                n
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(FedError::InvalidArgument(format!(
                "label {bad} >= class count {num_classes}"
            )));
        }
        let mut norm = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(FedError::InvalidArgument(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u != v {
                norm.push((u.min(v), u.max(v)));
            }
        }
        norm.sort_unstable();
        norm.dedup();
        let supervised = splits.iter().map(|s| *s == Split::Train).collect();
        let adjacency = build_adjacency(n, &norm);
        Ok(Graph {
            num_classes,
            edges: norm,
            features,
            labels,
            splits,
            supervised,
            adjacency,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    /// Number of undirected non-loop edges.
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Whether the node's ground-truth label may be used for supervision.
    /// Always false outside the train split.
    pub fn supervised(&self) -> &[bool] {
        &self.supervised
    }

    /// Adjacency with unit weights and one self-loop per node.
    pub fn adjacency(&self) -> &Csr {
        &self.adjacency
    }

    /// Neighbors of `v` in the self-looped adjacency (includes `v`).
    pub fn neighbors(&self, v: usize) -> &[usize] {
        self.adjacency.row(v).0
    }

    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&v| self.splits[v] == split).collect()
    }

    /// Train nodes whose labels are visible to the learner.
    pub fn supervised_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&v| self.supervised[v]).collect()
    }

    /// `D^{-1/2} (A + I) D^{-1/2}` in CSR form.
    pub fn sym_normalized_adjacency(&self) -> Csr {
        let adj = &self.adjacency;
        let inv_sqrt: Vec<f64> = (0..adj.n_rows)
            .map(|i| 1.0 / ((adj.indptr[i + 1] - adj.indptr[i]) as f64).sqrt())
            .collect();
        let mut values = Vec::with_capacity(adj.nnz());
        for i in 0..adj.n_rows {
            for &j in adj.row(i).0 {
                values.push(inv_sqrt[i] * inv_sqrt[j]);
            }
        }
        Csr { values, ..adj.clone() }
    }

    /// Hop distance from `source` to every node reachable within `max_hops`.
    pub fn hop_distances(&self, source: usize, max_hops: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_nodes()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            if du == max_hops {
                continue;
            }
            for &w in self.neighbors(u) {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// `{v} ∪ {u : dist(u, v) <= hops and label(u) = class}`, sorted.
    pub fn khop_class_neighborhood(&self, v: usize, hops: usize, class: usize, labels: &[Option<usize>]) -> Vec<usize> {
        if hops == 0 {
            return vec![v];
        }
        let dist = self.hop_distances(v, hops);
        dist.iter()
            .enumerate()
            .filter(|&(u, d)| u == v || (d.is_some() && labels[u] == Some(class)))
            .map(|(u, _)| u)
            .collect()
    }

    /// Subgraph induced on `nodes`; local id `i` maps to `nodes[i]`.
    /// Edges leaving the node set are dropped.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Graph {
        let mut local = vec![usize::MAX; self.num_nodes()];
        for (i, &v) in nodes.iter().enumerate() {
            local[v] = i;
        }
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter(|(u, v)| local[*u] != usize::MAX && local[*v] != usize::MAX)
            .map(|&(u, v)| (local[u], local[v]))
            .collect();
        let mut features = Matrix::zeros(nodes.len(), self.num_features());
        for (i, &v) in nodes.iter().enumerate() {
            features.row_mut(i).copy_from_slice(self.features.row(v));
        }
        let mut g = Graph::new(
            self.num_classes,
            edges,
            features,
            nodes.iter().map(|&v| self.labels[v]).collect(),
            nodes.iter().map(|&v| self.splits[v]).collect(),
        )
        .expect("induced subgraph of a valid graph is valid");
        g.supervised = nodes.iter().map(|&v| self.supervised[v]).collect();
        g
    }

    pub(crate) fn with_edges(&self, edges: Vec<(usize, usize)>) -> Graph {
        let adjacency = build_adjacency(self.num_nodes(), &edges);
        Graph {
            edges,
            adjacency,
            ..self.clone()
        }
    }

    pub(crate) fn features_mut(&mut self) -> &mut Matrix {
        &mut self.features
    }

    pub(crate) fn supervised_mut(&mut self) -> &mut Vec<bool> {
        &mut self.supervised
    }

    /// Permutes node ids: new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        self.induced_subgraph(perm)
    }

    /// Connected components as a per-node component id.
    pub fn connected_components(&self) -> (usize, Vec<usize>) {
        let n = self.num_nodes();
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = count;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &w in self.neighbors(u) {
                    if comp[w] == usize::MAX {
                        comp[w] = count;
                        queue.push_back(w);
                    }
                }
            }
            count += 1;
        }
        (count, comp)
    }
}

fn build_adjacency(n: usize, edges: &[(usize, usize)]) -> Csr {
    let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for &(u, v) in edges {
        rows[u].push(v);
        rows[v].push(u);
    }
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(n + 2 * edges.len());
    indptr.push(0);
    for mut r in rows {
        r.sort_unstable();
        indices.extend_from_slice(&r);
        indptr.push(indices.len());
    }
    let values = vec![1.0; indices.len()];
    Csr {
        n_rows: n,
        n_cols: n,
        indptr,
        indices,
        values,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_graph(n: usize, edges: &[(usize, usize)], labels: Vec<usize>) -> Graph {
        let k = labels.iter().max().map_or(1, |m| m + 1);
        let features = Matrix::from_vec(n, 2, (0..2 * n).map(|i| i as f64).collect());
        Graph::new(k, edges.iter().copied(), features, labels, vec![Split::Train; n]).unwrap()
    }

    #[test]
    fn path_graph_has_self_loops_in_csr() {
        let g = toy_graph(3, &[(0, 1), (1, 2)], vec![0, 0, 0]);
        assert_eq!(g.num_edges(), 2);
        let deg: Vec<usize> = (0..3).map(|v| g.neighbors(v).len()).collect();
        assert_eq!(deg, vec![2, 3, 2]);
    }

    #[test]
    fn explicit_self_loop_is_not_duplicated() {
        let g = toy_graph(2, &[(0, 0), (0, 1), (1, 0)], vec![0, 1]);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.neighbors(0), &[0, 1]);
        assert_eq!(g.neighbors(0).iter().filter(|&&u| u == 0).count(), 1);
    }

    #[test]
    fn khop_examples() {
        let g = toy_graph(3, &[(0, 1), (1, 2)], vec![0, 0, 1]);
        let labels: Vec<Option<usize>> = g.labels().iter().map(|&y| Some(y)).collect();
        assert_eq!(g.khop_class_neighborhood(2, 0, 0, &labels), vec![2]);
        assert_eq!(g.khop_class_neighborhood(0, 2, 0, &labels), vec![0, 1]);
    }

    fn floyd_warshall(g: &Graph) -> Vec<Vec<usize>> {
        let n = g.num_nodes();
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for &(u, v) in g.edges() {
            d[u][v] = 1;
            d[v][u] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    #[test]
    fn khop_matches_floyd_warshall_and_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let n = 20;
            let edges: Vec<(usize, usize)> = (0..30).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let g = toy_graph(n, &edges, labels.clone());
            let eff: Vec<Option<usize>> = labels.iter().map(|&y| Some(y)).collect();
            let dist = floyd_warshall(&g);
            for v in 0..n {
                for c in 0..3 {
                    let mut prev: Vec<usize> = Vec::new();
                    for h in 0..4 {
                        let got = g.khop_class_neighborhood(v, h, c, &eff);
                        let expect: Vec<usize> = if h == 0 {
                            vec![v]
                        } else {
                            (0..n)
                                .filter(|&u| u == v || (dist[v][u] <= h && labels[u] == c))
                                .collect()
                        };
                        assert_eq!(got, expect, "v={v} c={c} h={h}");
                        assert!(prev.iter().all(|u| got.contains(u)));
                        prev = got;
                    }
                }
            }
        }
    }

    #[test]
    fn induced_subgraph_keeps_only_internal_edges() {
        let g = toy_graph(4, &[(0, 1), (1, 2), (2, 3)], vec![0, 1, 0, 1]);
        let s = g.induced_subgraph(&[2, 3, 1]);
        assert_eq!(s.edges(), &[(0, 1), (0, 2)]);
        assert_eq!(s.labels(), &[0, 1, 1]);
        assert_eq!(s.features().row(0), g.features().row(2));
    }

    #[test]
    fn isolated_node_normalized_weight_is_one() {
        let g = toy_graph(1, &[], vec![0]);
        let a = g.sym_normalized_adjacency();
        assert_eq!(a.values, vec![1.0]);
    }
}
