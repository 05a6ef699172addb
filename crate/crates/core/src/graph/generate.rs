//! Random graph families used by the environments.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GraphError, InfluenceGraph};
use crate::rng::{seeded, SimRng};

const BIPARTITE_MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// Undirected G(n, p) with `p = mean_degree / (n - 1)`.
    ErdosRenyi { n: usize, mean_degree: f64 },
    /// Preferential attachment seeded by an `m`-clique.
    BarabasiAlbert { n: usize, m: usize },
    /// `n ~ U{n_min..=n_max}` points in the unit square, linked below `threshold`.
    Geometric {
        n_min: usize,
        n_max: usize,
        threshold: f64,
    },
    /// Firefighter-home incidence; the influence graph links firefighters
    /// sharing a home.
    BipartiteFirefight {
        firefighters: usize,
        homes: usize,
        edge_prob: f64,
    },
}

/// Interference gains `H_ij = (‖p_i − p_j‖ + 0.1)⁻⁵`, stored per node over its
/// undirected neighbours (self excluded), sorted by neighbour.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGains {
    pub gains: Vec<Vec<(usize, f64)>>,
}

impl ChannelGains {
    pub fn gain(distance: f64) -> f64 {
        (distance + 0.1).powi(-5)
    }

    pub fn from_positions(graph: &InfluenceGraph, positions: &[[f64; 2]]) -> Self {
        let gains = (0..graph.n())
            .map(|i| {
                graph
                    .undirected_neighbours(i)
                    .into_iter()
                    .map(|j| (j, Self::gain(distance(positions[i], positions[j]))))
                    .collect()
            })
            .collect();
        Self { gains }
    }
}

/// Firefighter-home incidence lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Bipartite {
    /// Homes each firefighter can reach, sorted.
    pub firefighter_homes: Vec<Vec<usize>>,
    /// Firefighters adjacent to each home, sorted.
    pub home_firefighters: Vec<Vec<usize>>,
}

impl Bipartite {
    pub fn homes(&self) -> usize {
        self.home_firefighters.len()
    }

    pub fn firefighters(&self) -> usize {
        self.firefighter_homes.len()
    }

    /// `(i, j)` whenever firefighters `i` and `j` share a home.
    pub fn influence_graph(&self) -> InfluenceGraph {
        let mut edges = Vec::new();
        for ffs in &self.home_firefighters {
            for &a in ffs {
                for &b in ffs {
                    edges.push((a, b));
                }
            }
        }
        InfluenceGraph::with_self_loops(self.firefighters(), &edges).expect("indices in range")
    }

    /// Homes adjacent to each home (sharing a firefighter), self excluded.
    pub fn home_adjacency(&self) -> Vec<Vec<usize>> {
        (0..self.homes())
            .map(|h| {
                let mut adj: Vec<usize> = self.home_firefighters[h]
                    .iter()
                    .flat_map(|&f| self.firefighter_homes[f].iter().copied())
                    .filter(|&g| g != h)
                    .collect();
                adj.sort_unstable();
                adj.dedup();
                adj
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub graph: InfluenceGraph,
    pub positions: Option<Vec<[f64; 2]>>,
    pub channel: Option<ChannelGains>,
    pub bipartite: Option<Bipartite>,
}

impl Generated {
    fn plain(graph: InfluenceGraph) -> Self {
        Self {
            graph,
            positions: None,
            channel: None,
            bipartite: None,
        }
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Generate from a fresh generator seeded with `seed`.
pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<Generated, GraphError> {
    generate_with(spec, &mut seeded(seed))
}

pub fn generate_with(spec: &GeneratorSpec, rng: &mut SimRng) -> Result<Generated, GraphError> {
    match *spec {
        GeneratorSpec::ErdosRenyi { n, mean_degree } => erdos_renyi(n, mean_degree, rng),
        GeneratorSpec::BarabasiAlbert { n, m } => barabasi_albert(n, m, rng),
        GeneratorSpec::Geometric {
            n_min,
            n_max,
            threshold,
        } => geometric(n_min, n_max, threshold, rng),
        GeneratorSpec::BipartiteFirefight {
            firefighters,
            homes,
            edge_prob,
        } => bipartite(firefighters, homes, edge_prob, rng),
    }
}

fn erdos_renyi(n: usize, mean_degree: f64, rng: &mut SimRng) -> Result<Generated, GraphError> {
    if n == 0 || !(mean_degree >= 0.0) {
        return Err(GraphError::Infeasible(format!(
            "erdos_renyi needs n >= 1 and mean_degree >= 0 (got n={n}, mean_degree={mean_degree})"
        )));
    }
    let p = if n > 1 {
        (mean_degree / (n - 1) as f64).min(1.0)
    } else {
        0.0
    };
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    Ok(Generated::plain(InfluenceGraph::undirected(n, &pairs)?))
}

fn barabasi_albert(n: usize, m: usize, rng: &mut SimRng) -> Result<Generated, GraphError> {
    if m == 0 || n < m {
        return Err(GraphError::Infeasible(format!(
            "barabasi_albert needs 1 <= m <= n (got n={n}, m={m})"
        )));
    }
    let mut pairs = Vec::new();
    // One entry per edge endpoint: sampling from it is degree-proportional.
    let mut endpoints = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            pairs.push((i, j));
            endpoints.extend([i, j]);
        }
    }
    for t in m..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        if t <= m {
            targets.extend(0..t);
        } else {
            while targets.len() < m {
                let c = match endpoints.choose(rng) {
                    Some(&c) => c,
                    None => rng.random_range(0..t),
                };
                if !targets.contains(&c) {
                    targets.push(c);
                }
            }
        }
        for &s in &targets {
            pairs.push((s, t));
            endpoints.extend([s, t]);
        }
    }
    Ok(Generated::plain(InfluenceGraph::undirected(n, &pairs)?))
}

fn geometric(
    n_min: usize,
    n_max: usize,
    threshold: f64,
    rng: &mut SimRng,
) -> Result<Generated, GraphError> {
    if n_min == 0 || n_min > n_max || !(threshold > 0.0) {
        return Err(GraphError::Infeasible(format!(
            "geometric needs 1 <= n_min <= n_max and threshold > 0 (got {n_min}, {n_max}, {threshold})"
        )));
    }
    let n = rng.random_range(n_min..=n_max);
    let positions: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if distance(positions[i], positions[j]) < threshold {
                pairs.push((i, j));
            }
        }
    }
    let graph = InfluenceGraph::undirected(n, &pairs)?;
    let channel = ChannelGains::from_positions(&graph, &positions);
    Ok(Generated {
        graph,
        positions: Some(positions),
        channel: Some(channel),
        bipartite: None,
    })
}

fn bipartite(
    firefighters: usize,
    homes: usize,
    edge_prob: f64,
    rng: &mut SimRng,
) -> Result<Generated, GraphError> {
    if firefighters == 0 || homes < 2 || !(edge_prob > 0.0 && edge_prob <= 1.0) {
        return Err(GraphError::Infeasible(format!(
            "bipartite needs firefighters >= 1, homes >= 2, edge_prob in (0, 1] \
             (got {firefighters}, {homes}, {edge_prob})"
        )));
    }
    for _ in 0..BIPARTITE_MAX_ATTEMPTS {
        let mut firefighter_homes = vec![Vec::new(); firefighters];
        let mut home_firefighters = vec![Vec::new(); homes];
        for (f, fh) in firefighter_homes.iter_mut().enumerate() {
            for (h, hf) in home_firefighters.iter_mut().enumerate() {
                if rng.random::<f64>() < edge_prob {
                    fh.push(h);
                    hf.push(f);
                }
            }
        }
        let ok = firefighter_homes.iter().all(|h| h.len() >= 2)
            && home_firefighters.iter().all(|f| !f.is_empty());
        if ok {
            let b = Bipartite {
                firefighter_homes,
                home_firefighters,
            };
            return Ok(Generated {
                graph: b.influence_graph(),
                positions: None,
                channel: None,
                bipartite: Some(b),
            });
        }
    }
    Err(GraphError::Infeasible(format!(
        "no bipartite sample met the degree constraints in {BIPARTITE_MAX_ATTEMPTS} attempts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn er_two_nodes_is_complete() {
        for seed in 0..5 {
            let g = generate(&GeneratorSpec::ErdosRenyi { n: 2, mean_degree: 2.0 }, seed).unwrap();
            assert_eq!(g.graph.edge_count(), 4);
        }
    }

    #[test]
    fn er_mean_degree_is_close() {
        let g = generate(&GeneratorSpec::ErdosRenyi { n: 2000, mean_degree: 3.0 }, 1).unwrap().graph;
        let mean = (0..g.n()).map(|i| g.undirected_neighbours(i).len()).sum::<usize>() as f64 / 2000.0;
        assert!((mean - 3.0).abs() < 0.15, "{mean}");
    }

    #[test]
    fn ba_small_attaches_to_all() {
        let g = generate(&GeneratorSpec::BarabasiAlbert { n: 4, m: 3 }, 9).unwrap().graph;
        assert_eq!(g.undirected_neighbours(3), vec![0, 1, 2]);
    }

    #[test]
    fn ba_edge_count() {
        let (n, m) = (200, 3);
        let g = generate(&GeneratorSpec::BarabasiAlbert { n, m }, 2).unwrap().graph;
        let undirected = (g.edge_count() - n) / 2;
        assert_eq!(undirected, m * (m - 1) / 2 + (n - m) * m);
    }

    #[test]
    fn geometric_gain_value() {
        assert!((ChannelGains::gain(0.9) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_edges_respect_threshold() {
        let spec = GeneratorSpec::Geometric { n_min: 20, n_max: 50, threshold: 0.25 };
        let out = generate(&spec, 4).unwrap();
        let pos = out.positions.unwrap();
        assert!((20..=50).contains(&out.graph.n()));
        for (i, j) in out.graph.edges().filter(|(i, j)| i != j) {
            assert!(distance(pos[i], pos[j]) < 0.25);
        }
        let ch = out.channel.unwrap();
        for (i, row) in ch.gains.iter().enumerate() {
            for &(j, h) in row {
                let back = ch.gains[j].iter().find(|(k, _)| *k == i).unwrap().1;
                assert_eq!(h, back);
            }
        }
    }

    #[test]
    fn bipartite_constraints_hold() {
        let spec = GeneratorSpec::BipartiteFirefight { firefighters: 20, homes: 40, edge_prob: 0.15 };
        let b = generate(&spec, 3).unwrap().bipartite.unwrap();
        assert!(b.firefighter_homes.iter().all(|h| h.len() >= 2));
        assert!(b.home_firefighters.iter().all(|f| !f.is_empty()));
    }

    #[test]
    fn bipartite_infeasible() {
        let spec = GeneratorSpec::BipartiteFirefight { firefighters: 3, homes: 1, edge_prob: 0.5 };
        assert!(matches!(generate(&spec, 0), Err(GraphError::Infeasible(_))));
        let spec = GeneratorSpec::BipartiteFirefight { firefighters: 50, homes: 60, edge_prob: 0.001 };
        assert!(matches!(generate(&spec, 0), Err(GraphError::Infeasible(_))));
    }

    #[test]
    fn generators_are_deterministic() {
        let specs = [
            GeneratorSpec::ErdosRenyi { n: 50, mean_degree: 3.0 },
            GeneratorSpec::BarabasiAlbert { n: 50, m: 2 },
            GeneratorSpec::Geometric { n_min: 10, n_max: 30, threshold: 0.3 },
            GeneratorSpec::BipartiteFirefight { firefighters: 10, homes: 20, edge_prob: 0.3 },
        ];
        for spec in &specs {
            assert_eq!(generate(spec, 11).unwrap(), generate(spec, 11).unwrap());
        }
    }
}
