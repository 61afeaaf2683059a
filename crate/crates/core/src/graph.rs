//! Directed communication graph and the synchronous message bus.
//!
//! Edge convention: an edge `(i, j)` means node `i` receives from node `j`.
//! So `in_neighbors(i) = { j | (i, j) ∈ E }` and
//! `out_neighbors(i) = { j | (j, i) ∈ E }`.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    nodes: usize,
    edges: Vec<(usize, usize)>,
    in_neighbors: Vec<Vec<usize>>,
    out_neighbors: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Builds a graph from `(receiver, sender)` pairs. Duplicates collapse.
    pub fn new(nodes: usize, edges: &[(usize, usize)]) -> Result<Self, ConfigError> {
        if nodes == 0 {
            return Err(ConfigError::invalid(
                "comm_edges",
                "graph needs at least one node",
            ));
        }
        let mut unique = BTreeSet::new();
        for &(receiver, sender) in edges {
            if receiver >= nodes || sender >= nodes {
                return Err(ConfigError::invalid(
                    "comm_edges",
                    format!("edge ({receiver}, {sender}) references a node outside 0..{nodes}"),
                ));
            }
            if receiver == sender {
                return Err(ConfigError::invalid(
                    "comm_edges",
                    format!("self-loop at node {receiver}"),
                ));
            }
            unique.insert((receiver, sender));
        }
        let mut in_neighbors = vec![Vec::new(); nodes];
        let mut out_neighbors = vec![Vec::new(); nodes];
        for &(receiver, sender) in &unique {
            in_neighbors[receiver].push(sender);
            out_neighbors[sender].push(receiver);
        }
        for list in out_neighbors.iter_mut() {
            list.sort_unstable();
        }
        Ok(Self {
            nodes,
            edges: unique.into_iter().collect(),
            in_neighbors,
            out_neighbors,
        })
    }

    /// Information flows 0 → 1 → … → n−1 → 0.
    pub fn directed_ring(nodes: usize) -> Self {
        let edges: Vec<_> = if nodes < 2 {
            Vec::new()
        } else {
            (0..nodes).map(|i| ((i + 1) % nodes, i)).collect()
        };
        Self::new(nodes, &edges).expect("ring is well formed")
    }

    pub fn complete(nodes: usize) -> Self {
        let edges: Vec<_> = (0..nodes)
            .flat_map(|i| (0..nodes).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        Self::new(nodes, &edges).expect("complete graph is well formed")
    }

    /// Ten-node directed network with diameter 5: a directed ring plus the
    /// chords 0→2, 2→5, 5→7, 7→0 (sender→receiver).
    pub fn ten_node_preset() -> Self {
        let mut edges: Vec<(usize, usize)> = (0..10).map(|i| ((i + 1) % 10, i)).collect();
        edges.extend([(2, 0), (5, 2), (7, 5), (0, 7)]);
        Self::new(10, &edges).expect("preset graph is well formed")
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    /// `(receiver, sender)` pairs, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn in_neighbors(&self, node: usize) -> &[usize] {
        &self.in_neighbors[node]
    }

    pub fn out_neighbors(&self, node: usize) -> &[usize] {
        &self.out_neighbors[node]
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.out_neighbors[node].len()
    }

    pub fn max_out_degree(&self) -> usize {
        (0..self.nodes)
            .map(|i| self.out_degree(i))
            .max()
            .unwrap_or(0)
    }

    /// Directed hop distances from `source` along the direction of information flow.
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        bfs(source, self.nodes, |v| &self.out_neighbors[v])
    }
}

fn bfs<'a>(source: usize, nodes: usize, next: impl Fn(usize) -> &'a [usize]) -> Vec<Option<usize>> {
    let mut dist = vec![None; nodes];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].expect("queued nodes are reached");
        for &w in next(v) {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

pub fn is_strongly_connected(g: &CommGraph) -> bool {
    let forward = bfs(0, g.nodes, |v| &g.out_neighbors[v]);
    let backward = bfs(0, g.nodes, |v| &g.in_neighbors[v]);
    forward.iter().chain(&backward).all(Option::is_some)
}

/// Longest shortest directed path over all ordered pairs.
pub fn diameter(g: &CommGraph) -> Result<usize, ConfigError> {
    let mut longest = 0;
    for source in 0..g.nodes {
        for d in g.hop_distances(source) {
            longest = longest.max(d.ok_or(ConfigError::NotStronglyConnected)?);
        }
    }
    Ok(longest)
}

/// Mass message of the ratio consensus: sender's scaled numerator and denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMessage {
    pub sender: usize,
    pub y_hat: f64,
    pub z_hat: f64,
}

/// Delivers one synchronous round.
///
/// `outgoing[j]` is node j's broadcast; node i's inbox holds the broadcasts of
/// its in-neighbors in ascending sender order. Nothing is lost or reordered.
pub fn broadcast_round<M: Clone>(g: &CommGraph, outgoing: &[M]) -> Vec<Vec<M>> {
    assert_eq!(outgoing.len(), g.nodes, "one outgoing message per node");
    g.in_neighbors
        .iter()
        .map(|senders| senders.iter().map(|&j| outgoing[j].clone()).collect())
        .collect()
}
