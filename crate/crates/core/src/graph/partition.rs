//! Splitting a global graph into client subgraphs.
//!
//! Two partitioners are provided: Louvain community detection followed by a
//! size adjustment to the requested client count, and seeded BFS region
//! growing with exact size balancing (a stand-in for Metis).

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Graph;
use crate::error::{FedError, Result};

/// A client's induced subgraph plus its id maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientSubgraph {
    pub graph: Graph,
    /// `global_ids[local] = global`, ascending.
    pub global_ids: Vec<usize>,
}

impl ClientSubgraph {
    pub fn local_id(&self, global: usize) -> Option<usize> {
        self.global_ids.binary_search(&global).ok()
    }

    pub fn global_id(&self, local: usize) -> usize {
        self.global_ids[local]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub assignment: Vec<usize>,
    pub clients: Vec<ClientSubgraph>,
}

impl Partition {
    /// Builds induced subgraphs for an assignment; cross-client edges are dropped.
    pub fn from_assignment(g: &Graph, assignment: Vec<usize>, num_parts: usize) -> Result<Self> {
        if assignment.len() != g.num_nodes() {
            return Err(FedError::Dimension(format!(
                "assignment covers {} of {} nodes",
                assignment.len(),
                g.num_nodes()
            )));
        }
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_parts];
        for (v, &p) in assignment.iter().enumerate() {
            if p >= num_parts {
                return Err(FedError::InvalidArgument(format!(
                    "node {v} assigned to part {p} of {num_parts}"
                )));
            }
            members[p].push(v);
        }
        let clients = members
            .into_iter()
            .map(|nodes| ClientSubgraph {
                graph: g.induced_subgraph(&nodes),
                global_ids: nodes,
            })
            .collect();
        Ok(Partition { assignment, clients })
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn part_sizes(&self) -> Vec<usize> {
        self.clients.iter().map(|c| c.global_ids.len()).collect()
    }
}

/// Common interface for partitioners.
pub trait Partitioner {
    fn partition(&self, g: &Graph, target_clients: usize, seed: u64) -> Result<Partition>;
}

fn check_target(g: &Graph, target: usize) -> Result<()> {
    if target == 0 {
        return Err(FedError::InvalidArgument("target_clients must be >= 1".into()));
    }
    if target > g.num_nodes() {
        return Err(FedError::InvalidArgument(format!(
            "target_clients {target} exceeds node count {}",
            g.num_nodes()
        )));
    }
    Ok(())
}

/// Seeded BFS region growing. Part sizes differ by at most one node.
pub fn balanced_partition(g: &Graph, target_clients: usize, seed: u64) -> Result<Partition> {
    check_target(g, target_clients)?;
    let assignment = grow_regions(g, &(0..g.num_nodes()).collect::<Vec<_>>(), target_clients, seed);
    Partition::from_assignment(g, assignment, target_clients)
}

/// Region growing restricted to `nodes`; returns a part id per graph node
/// (`usize::MAX` for nodes outside `nodes`).
fn grow_regions(g: &Graph, nodes: &[usize], parts: usize, seed: u64) -> Vec<usize> {
    let n = nodes.len();
    let mut allowed = vec![false; g.num_nodes()];
    for &v in nodes {
        allowed[v] = true;
    }
    let mut order = nodes.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![usize::MAX; g.num_nodes()];
    let mut cursor = 0;
    for part in 0..parts {
        let target = n / parts + usize::from(part < n % parts);
        let mut size = 0;
        let mut queue: VecDeque<usize> = VecDeque::new();
        while size < target {
            let u = match queue.pop_front() {
                Some(u) => u,
                None => {
                    while assignment[order[cursor]] != usize::MAX {
                        cursor += 1;
                    }
                    order[cursor]
                }
            };
            if assignment[u] != usize::MAX {
                continue;
            }
            assignment[u] = part;
            size += 1;
            for &w in g.neighbors(u) {
                if allowed[w] && assignment[w] == usize::MAX {
                    queue.push_back(w);
                }
            }
        }
    }
    assignment
}

/// Per-level modularity recorded by [`louvain_communities`].
#[derive(Debug, Clone, Default)]
pub struct LouvainTrace {
    /// Modularity of the flattened assignment after each local-moving phase,
    /// starting with the singleton partition.
    pub modularity: Vec<f64>,
}

/// Newman modularity of `assignment` on the unweighted graph (self-loops of
/// the propagation adjacency excluded).
pub fn modularity(g: &Graph, assignment: &[usize]) -> f64 {
    let m = g.num_edges() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let k = assignment.iter().max().map_or(0, |x| x + 1);
    let mut internal = vec![0.0; k];
    let mut total = vec![0.0; k];
    for &(u, v) in g.edges() {
        total[assignment[u]] += 1.0;
        total[assignment[v]] += 1.0;
        if assignment[u] == assignment[v] {
            internal[assignment[u]] += 1.0;
        }
    }
    internal
        .iter()
        .zip(&total)
        .map(|(l, d)| l / m - (d / (2.0 * m)).powi(2))
        .sum()
}

struct WeightedGraph {
    // neighbor lists including self loops; A is symmetric and A_ii holds
    // twice the internal weight of an aggregated node
    adj: Vec<Vec<(usize, f64)>>,
    degree: Vec<f64>,
    total: f64,
}

impl WeightedGraph {
    fn from_graph(g: &Graph) -> Self {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); g.num_nodes()];
        for &(u, v) in g.edges() {
            adj[u].push((v, 1.0));
            adj[v].push((u, 1.0));
        }
        Self::finish(adj)
    }

    fn finish(adj: Vec<Vec<(usize, f64)>>) -> Self {
        let degree: Vec<f64> = adj.iter().map(|r| r.iter().map(|(_, w)| w).sum()).collect();
        let total = degree.iter().sum();
        WeightedGraph { adj, degree, total }
    }

    fn aggregate(&self, comm: &[usize], k: usize) -> Self {
        let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        for (i, row) in self.adj.iter().enumerate() {
            for &(j, w) in row {
                *maps[comm[i]].entry(comm[j]).or_insert(0.0) += w;
            }
        }
        Self::finish(maps.into_iter().map(|m| m.into_iter().collect()).collect())
    }

    /// One local-moving phase. Returns whether any node moved.
    fn local_moving(&self, comm: &mut [usize], rng: &mut ChaCha8Rng) -> bool {
        let n = self.adj.len();
        let m2 = self.total;
        let mut tot = vec![0.0; n];
        for i in 0..n {
            tot[comm[i]] += self.degree[i];
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut links: BTreeMap<usize, f64> = BTreeMap::new();
        let mut any = false;
        loop {
            let mut moved = false;
            for &i in &order {
                let ci = comm[i];
                let ki = self.degree[i];
                links.clear();
                for &(j, w) in &self.adj[i] {
                    if j != i {
                        *links.entry(comm[j]).or_insert(0.0) += w;
                    }
                }
                tot[ci] -= ki;
                let gain = |c: usize, kic: f64| kic - ki * tot[c] / m2;
                let mut best = ci;
                let mut best_gain = gain(ci, links.get(&ci).copied().unwrap_or(0.0));
                for (&c, &kic) in &links {
                    let g = gain(c, kic);
                    if g > best_gain + 1e-12 {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += ki;
                if best != ci {
                    comm[i] = best;
                    moved = true;
                    any = true;
                }
            }
            if !moved {
                break;
            }
        }
        any
    }
}

fn relabel(comm: &mut [usize]) -> usize {
    let mut map = BTreeMap::new();
    for c in comm.iter_mut() {
        let next = map.len();
        *c = *map.entry(*c).or_insert(next);
    }
    map.len()
}

/// Multi-level Louvain. Returns a community id per node (ids dense, in
/// order of first appearance) and the per-phase modularity trace.
pub fn louvain_communities(g: &Graph, seed: u64) -> (Vec<usize>, LouvainTrace) {
    let n = g.num_nodes();
    let mut node_comm: Vec<usize> = (0..n).collect();
    let mut trace = LouvainTrace {
        modularity: vec![modularity(g, &node_comm)],
    };
    if g.num_edges() == 0 {
        return (node_comm, trace);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = WeightedGraph::from_graph(g);
    loop {
        let mut comm: Vec<usize> = (0..level.adj.len()).collect();
        let moved = level.local_moving(&mut comm, &mut rng);
        if !moved {
            break;
        }
        let k = relabel(&mut comm);
        for c in node_comm.iter_mut() {
            *c = comm[*c];
        }
        trace.modularity.push(modularity(g, &node_comm));
        if k == level.adj.len() {
            break;
        }
        level = level.aggregate(&comm, k);
    }
    relabel(&mut node_comm);
    (node_comm, trace)
}

/// Louvain communities adjusted to exactly `target_clients` parts: the
/// smallest community is merged into the community it shares the most edges
/// with (the smallest other community when it has none) until the count
/// matches; the largest community is bisected by region growing while there
/// are too few.
pub fn louvain_partition(g: &Graph, target_clients: usize, seed: u64) -> Result<Partition> {
    check_target(g, target_clients)?;
    let (mut comm, _) = louvain_communities(g, seed);
    let mut k = relabel(&mut comm);

    while k > target_clients {
        let sizes = community_sizes(&comm, k);
        let smallest = argmin_by_size(&sizes, None);
        let mut shared = vec![0usize; k];
        for &(u, v) in g.edges() {
            let (a, b) = (comm[u], comm[v]);
            if a == smallest && b != smallest {
                shared[b] += 1;
            } else if b == smallest && a != smallest {
                shared[a] += 1;
            }
        }
        let into = match (0..k)
            .filter(|&c| c != smallest && shared[c] > 0)
            .max_by(|&a, &b| shared[a].cmp(&shared[b]).then(b.cmp(&a)))
        {
            Some(c) => c,
            None => argmin_by_size(&sizes, Some(smallest)),
        };
        for c in comm.iter_mut() {
            if *c == smallest {
                *c = into;
            }
        }
        k = relabel(&mut comm);
    }

    let mut split_round = 0u64;
    while k < target_clients {
        let sizes = community_sizes(&comm, k);
        let largest = (0..k).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).unwrap();
        let nodes: Vec<usize> = (0..g.num_nodes()).filter(|&v| comm[v] == largest).collect();
        let halves = grow_regions(g, &nodes, 2, seed.wrapping_add(split_round));
        for &v in &nodes {
            if halves[v] == 1 {
                comm[v] = k;
            }
        }
        k += 1;
        split_round += 1;
    }
    relabel(&mut comm);
    Partition::from_assignment(g, comm, target_clients)
}

fn community_sizes(comm: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &c in comm {
        sizes[c] += 1;
    }
    sizes
}

fn argmin_by_size(sizes: &[usize], exclude: Option<usize>) -> usize {
    (0..sizes.len())
        .filter(|&c| Some(c) != exclude)
        .min_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(a.cmp(&b)))
        .unwrap()
}

/// Selects a partitioner by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMethod {
    Louvain,
    Balanced,
}

impl Partitioner for PartitionMethod {
    fn partition(&self, g: &Graph, target_clients: usize, seed: u64) -> Result<Partition> {
        match self {
            PartitionMethod::Louvain => louvain_partition(g, target_clients, seed),
            PartitionMethod::Balanced => balanced_partition(g, target_clients, seed),
        }
    }
}
