//! Influence graphs and the diffusion operator built from them.

mod diffusion;
mod edge;
mod generate;
mod io;

pub use diffusion::DiffusionOperator;
pub use edge::{edge_transform, edge_transform_with_self_edges, EdgeGraph};
pub use generate::{generate, generate_with, Bipartite, ChannelGains, Generated, GeneratorSpec};
pub use io::{parse_graph_text, write_graph_text};

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("discount {0} is outside (0, 1)")]
    InvalidGamma(f64),
    #[error("node {0} has no self-loop")]
    MissingSelfLoop(usize),
    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("infeasible generator parameters: {0}")]
    Infeasible(String),
    #[error("communication graph has no edges between distinct nodes")]
    EmptyCommunicationGraph,
    #[error("graph text line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A directed, self-connected graph over agents `0..n`.
///
/// An edge `(i, j)` means agent `i` influences agent `j`. Adjacency lists are
/// kept sorted so iteration order, and every sum taken over it, is fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceGraph {
    n: usize,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
}

impl InfluenceGraph {
    /// Build from directed edges; every node must carry a self-loop.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let g = Self::build(n, edges.iter().copied())?;
        if let Some(i) = (0..n).find(|&i| !g.has_edge(i, i)) {
            return Err(GraphError::MissingSelfLoop(i));
        }
        Ok(g)
    }

    /// Build from directed edges, adding any missing self-loops.
    pub fn with_self_loops(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        Self::build(n, edges.iter().copied().chain((0..n).map(|i| (i, i))))
    }

    /// Build an undirected graph (both directions of every pair) with self-loops.
    pub fn undirected(n: usize, pairs: &[(usize, usize)]) -> Result<Self, GraphError> {
        Self::build(
            n,
            pairs
                .iter()
                .flat_map(|&(a, b)| [(a, b), (b, a)])
                .chain((0..n).map(|i| (i, i))),
        )
    }

    fn build(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for (i, j) in edges {
            for node in [i, j] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
            out_adj[i].push(j);
            in_adj[j].push(i);
        }
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { n, out_adj, in_adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of directed edges, self-loops included.
    pub fn edge_count(&self) -> usize {
        self.out_adj.iter().map(Vec::len).sum()
    }

    /// All directed edges sorted by `(i, j)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out_adj
            .iter()
            .enumerate()
            .flat_map(|(i, outs)| outs.iter().map(move |&j| (i, j)))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && self.out_adj[i].binary_search(&j).is_ok()
    }

    /// Nodes `j` with `(i, j)` an edge, including `i` itself.
    pub fn out_neighbours(&self, i: usize) -> &[usize] {
        &self.out_adj[i]
    }

    /// Nodes `j` with `(j, i)` an edge, including `i` itself.
    pub fn in_neighbours(&self, i: usize) -> &[usize] {
        &self.in_adj[i]
    }

    /// `d_j`, the number of edges entering `j`.
    pub fn in_degree(&self, j: usize) -> usize {
        self.in_adj[j].len()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_adj[i].len()
    }

    /// Neighbours in either direction, excluding `i`.
    pub fn undirected_neighbours(&self, i: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.out_adj[i]
            .iter()
            .chain(&self.in_adj[i])
            .copied()
            .filter(|&j| j != i)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// The graph with `Ã_ij = max(A_ij, A_ji)`.
    pub fn symmetrised(&self) -> Self {
        let edges: Vec<(usize, usize)> = self.edges().flat_map(|(i, j)| [(i, j), (j, i)]).collect();
        Self::build(self.n, edges.into_iter()).expect("endpoints already validated")
    }

    fn check_node(&self, i: usize) -> Result<(), GraphError> {
        if i >= self.n {
            Err(GraphError::NodeOutOfRange { node: i, n: self.n })
        } else {
            Ok(())
        }
    }

    /// Directed BFS distance from `i` to every node (`None` if unreachable).
    pub fn distances_from(&self, i: usize) -> Result<Vec<Option<usize>>, GraphError> {
        self.check_node(i)?;
        let mut dist = vec![None; self.n];
        dist[i] = Some(0);
        let mut queue = VecDeque::from([i]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &self.out_adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }

    /// Nodes reachable from `i` by a directed path of length at most `m`.
    pub fn reachable_out(&self, i: usize, m: usize) -> Result<Vec<usize>, GraphError> {
        Ok(self
            .distances_from(i)?
            .into_iter()
            .enumerate()
            .filter_map(|(j, d)| d.filter(|&d| d <= m).map(|_| j))
            .collect())
    }

    /// `U = A D⁻¹ r`: each node's value split evenly over the edges entering it
    /// and summed at the tails.
    pub fn smooth(&self, r: &[f64]) -> Result<Vec<f64>, GraphError> {
        if r.len() != self.n {
            return Err(GraphError::DimensionMismatch {
                expected: self.n,
                got: r.len(),
            });
        }
        let mut u = vec![0.0; self.n];
        for j in 0..self.n {
            let share = r[j] / self.in_degree(j) as f64;
            for &i in &self.in_adj[j] {
                u[i] += share;
            }
        }
        Ok(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> InfluenceGraph {
        InfluenceGraph::with_self_loops(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn self_loops_required() {
        assert_eq!(
            InfluenceGraph::from_edges(2, &[(0, 0), (0, 1)]),
            Err(GraphError::MissingSelfLoop(1))
        );
        assert!(InfluenceGraph::from_edges(2, &[(0, 0), (1, 1), (0, 1)]).is_ok());
    }

    #[test]
    fn out_of_range_endpoint_rejected() {
        assert!(matches!(
            InfluenceGraph::with_self_loops(2, &[(0, 2)]),
            Err(GraphError::NodeOutOfRange { node: 2, n: 2 })
        ));
    }

    #[test]
    fn in_degree_counts_self_loop() {
        let g = path3();
        assert_eq!(g.in_degree(0), 1);
        assert_eq!(g.in_degree(1), 2);
        assert_eq!(g.in_degree(2), 2);
    }

    #[test]
    fn reachable_out_on_path() {
        let g = path3();
        assert_eq!(g.reachable_out(0, 0).unwrap(), vec![0]);
        assert_eq!(g.reachable_out(0, 1).unwrap(), vec![0, 1]);
        assert_eq!(g.reachable_out(0, 5).unwrap(), vec![0, 1, 2]);
        assert_eq!(g.reachable_out(2, 5).unwrap(), vec![2]);
        assert!(g.reachable_out(3, 1).is_err());
    }

    #[test]
    fn symmetrised_adds_reverse_edges() {
        let s = path3().symmetrised();
        assert!(s.has_edge(1, 0) && s.has_edge(2, 1) && s.has_edge(0, 1));
        assert_eq!(s.edge_count(), 7);
    }

    #[test]
    fn smooth_on_path() {
        // A D^-1 with d = (1, 2, 2): U0 = r0 + r1/2, U1 = r1/2 + r2/2, U2 = r2/2
        let u = path3().smooth(&[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(u, vec![2.0, 3.0, 2.0]);
    }
}
