use std::collections::BTreeMap;

use super::{GraphError, InfluenceGraph};

/// The influence graph of an edge-GMDP: each directed communication edge is
/// an agent, and agent `e` influences agent `f` when `e` ends where `f` starts.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGraph {
    /// `(tail, head)` of each edge-agent, sorted; agent `k` is `agent_edges[k]`.
    pub agent_edges: Vec<(usize, usize)>,
    /// Influence pairs between edge-agents, self-pairs included, sorted.
    pub links: Vec<(usize, usize)>,
    /// Node count of the communication graph.
    pub nodes: usize,
}

impl EdgeGraph {
    pub fn len(&self) -> usize {
        self.agent_edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agent_edges.is_empty()
    }

    /// Index of the agent for edge `(i, j)`.
    pub fn agent_of(&self, edge: (usize, usize)) -> Option<usize> {
        self.agent_edges.binary_search(&edge).ok()
    }

    pub fn influence_graph(&self) -> InfluenceGraph {
        InfluenceGraph::from_edges(self.len(), &self.links).expect("links contain every self-pair")
    }
}

fn build(nodes: usize, agent_edges: Vec<(usize, usize)>) -> EdgeGraph {
    let mut by_tail: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, &(a, _)) in agent_edges.iter().enumerate() {
        by_tail.entry(a).or_default().push(k);
    }
    let mut links = Vec::new();
    for (e, &(_, head)) in agent_edges.iter().enumerate() {
        links.push((e, e));
        if let Some(next) = by_tail.get(&head) {
            links.extend(next.iter().filter(|&&f| f != e).map(|&f| (e, f)));
        }
    }
    links.sort_unstable();
    EdgeGraph {
        agent_edges,
        links,
        nodes,
    }
}

/// Edge-GMDP graph over the non-self edges of `graph`.
pub fn edge_transform(graph: &InfluenceGraph) -> Result<EdgeGraph, GraphError> {
    let agent_edges: Vec<(usize, usize)> = graph.edges().filter(|(i, j)| i != j).collect();
    if agent_edges.is_empty() {
        return Err(GraphError::EmptyCommunicationGraph);
    }
    Ok(build(graph.n(), agent_edges))
}

/// Edge-GMDP graph over every edge of `graph`, self-loops included, so each
/// node owns at least one edge-agent.
pub fn edge_transform_with_self_edges(graph: &InfluenceGraph) -> EdgeGraph {
    build(graph.n(), graph.edges().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge() {
        let g = InfluenceGraph::with_self_loops(2, &[(0, 1)]).unwrap();
        let eg = edge_transform(&g).unwrap();
        assert_eq!(eg.agent_edges, vec![(0, 1)]);
        assert_eq!(eg.links, vec![(0, 0)]);
    }

    #[test]
    fn path_links_head_to_tail() {
        let g = InfluenceGraph::with_self_loops(3, &[(0, 1), (1, 2)]).unwrap();
        let eg = edge_transform(&g).unwrap();
        assert_eq!(eg.agent_edges, vec![(0, 1), (1, 2)]);
        assert_eq!(eg.links, vec![(0, 0), (0, 1), (1, 1)]);
    }

    #[test]
    fn complete_pair() {
        let g = InfluenceGraph::undirected(2, &[(0, 1)]).unwrap();
        let eg = edge_transform(&g).unwrap();
        assert_eq!(eg.len(), 2);
        assert_eq!(eg.links.len(), 4);
    }

    #[test]
    fn empty_rejected() {
        let g = InfluenceGraph::with_self_loops(3, &[]).unwrap();
        assert_eq!(edge_transform(&g), Err(GraphError::EmptyCommunicationGraph));
        let eg = edge_transform_with_self_edges(&g);
        assert_eq!(eg.len(), 3);
        assert_eq!(eg.links, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn link_invariant() {
        let g = InfluenceGraph::with_self_loops(5, &[(0, 1), (1, 2), (2, 0), (1, 3), (3, 1), (4, 2)]).unwrap();
        for eg in [edge_transform(&g).unwrap(), edge_transform_with_self_edges(&g)] {
            for e in 0..eg.len() {
                for f in 0..eg.len() {
                    let linked = eg.links.binary_search(&(e, f)).is_ok();
                    let expect = e == f || eg.agent_edges[e].1 == eg.agent_edges[f].0;
                    assert_eq!(linked, expect, "{e} {f}");
                }
            }
        }
    }
}
