//! Relation support/relatedness and structural statistics of a knowledge graph.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kgbuild::{KnowledgeGraph, Relation, RelationId};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("support of {0} is undefined: no node is incident to it")]
    UndefinedSupport(Relation),
    #[error("relation id {0} out of range")]
    UnknownRelation(RelationId),
    #[error("no relation has incident nodes")]
    NoRelations,
}

/// Entities touching relation `r` as head or tail, as a membership mask.
fn incidence(kg: &KnowledgeGraph) -> Vec<Vec<bool>> {
    let mut sets = vec![vec![false; kg.entity_count()]; kg.relation_count()];
    for t in kg.triples() {
        sets[t.relation][t.head] = true;
        sets[t.relation][t.tail] = true;
    }
    sets
}

/// `(|nodes(ri) ∩ nodes(rj)|, |nodes(ri)|)`.
fn overlap(sets: &[Vec<bool>], kg: &KnowledgeGraph, ri: RelationId, rj: RelationId) -> Result<(usize, usize), StatsError> {
    let a = sets.get(ri).ok_or(StatsError::UnknownRelation(ri))?;
    let b = sets.get(rj).ok_or(StatsError::UnknownRelation(rj))?;
    let size = a.iter().filter(|&&x| x).count();
    if size == 0 {
        return Err(StatsError::UndefinedSupport(kg.relations()[ri]));
    }
    let both = a.iter().zip(b).filter(|(&x, &y)| x && y).count();
    Ok((both, size))
}

fn support_from(sets: &[Vec<bool>], kg: &KnowledgeGraph, ri: RelationId, rj: RelationId) -> Result<f64, StatsError> {
    overlap(sets, kg, ri, rj).map(|(both, size)| both as f64 / size as f64)
}

/// `|nodes(ri) ∩ nodes(rj)| / |nodes(ri)|`.
pub fn support(ri: RelationId, rj: RelationId, kg: &KnowledgeGraph) -> Result<f64, StatsError> {
    support_from(&incidence(kg), kg, ri, rj)
}

/// Harmonic mean of `c/a` and `c/b`, i.e. `2c/(a+b)`, rounded once.
fn harmonic(both: usize, size_i: usize, size_j: usize) -> f64 {
    (2 * both) as f64 / (size_i + size_j) as f64
}

fn relatedness_from(sets: &[Vec<bool>], kg: &KnowledgeGraph, ri: RelationId, rj: RelationId) -> Result<f64, StatsError> {
    let (both, size_i) = overlap(sets, kg, ri, rj)?;
    let (_, size_j) = overlap(sets, kg, rj, ri)?;
    Ok(harmonic(both, size_i, size_j))
}

/// Harmonic mean of the two directed supports.
pub fn relatedness(ri: RelationId, rj: RelationId, kg: &KnowledgeGraph) -> Result<f64, StatsError> {
    relatedness_from(&incidence(kg), kg, ri, rj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatednessMatrix {
    pub relations: Vec<Relation>,
    /// `support[i][j] = supp(ri -> rj)`; `None` when `ri` has no incident node.
    pub support: Vec<Vec<Option<f64>>>,
    pub relatedness: Vec<Vec<Option<f64>>>,
}

pub fn relatedness_matrix(kg: &KnowledgeGraph) -> Result<RelatednessMatrix, StatsError> {
    let sets = incidence(kg);
    let n = kg.relation_count();
    let support: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| (0..n).map(|j| support_from(&sets, kg, i, j).ok()).collect())
        .collect();
    if support.iter().all(|row| row.iter().all(Option::is_none)) {
        return Err(StatsError::NoRelations);
    }
    let relatedness = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| relatedness_from(&sets, kg, i, j).ok())
                .collect()
        })
        .collect();
    Ok(RelatednessMatrix {
        relations: kg.relations().to_vec(),
        support,
        relatedness,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub density: f64,
    pub average_degree: f64,
    /// Nodes incident to at least two distinct relations.
    pub multiplex_dyads: usize,
    pub triads_possible: u64,
    pub open_triads: u64,
    pub degree_variance: f64,
    pub edge_connectivity: usize,
    pub diameter: usize,
    pub average_shortest_path: f64,
}

impl GraphStats {
    pub const FIELDS: [&'static str; 11] = [
        "nodes",
        "edges",
        "density",
        "average_degree",
        "multiplex_dyads",
        "triads_possible",
        "open_triads",
        "degree_variance",
        "edge_connectivity",
        "diameter",
        "average_shortest_path",
    ];

    /// `(field, value)` pairs in [`GraphStats::FIELDS`] order.
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        let values = [
            self.nodes.to_string(),
            self.edges.to_string(),
            self.density.to_string(),
            self.average_degree.to_string(),
            self.multiplex_dyads.to_string(),
            self.triads_possible.to_string(),
            self.open_triads.to_string(),
            self.degree_variance.to_string(),
            self.edge_connectivity.to_string(),
            self.diameter.to_string(),
            self.average_shortest_path.to_string(),
        ];
        Self::FIELDS.into_iter().zip(values).collect()
    }
}

/// Directed density `E / (N (N - 1))`.
pub fn density(nodes: usize, edges: usize) -> f64 {
    if nodes < 2 {
        0.0
    } else {
        edges as f64 / (nodes as f64 * (nodes as f64 - 1.0))
    }
}

pub fn average_degree(nodes: usize, edges: usize) -> f64 {
    if nodes == 0 {
        0.0
    } else {
        edges as f64 / nodes as f64
    }
}

/// `C(N, 3)`.
pub fn triads_possible(nodes: usize) -> u64 {
    let n = nodes as u128;
    if n < 3 {
        0
    } else {
        (n * (n - 1) * (n - 2) / 6) as u64
    }
}

/// Undirected simple projection as sorted adjacency lists.
pub fn undirected_projection(kg: &KnowledgeGraph) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); kg.entity_count()];
    for t in kg.triples() {
        adj[t.head].push(t.tail);
        adj[t.tail].push(t.head);
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

fn count_triangles(adj: &[Vec<usize>]) -> u64 {
    let mut total = 0u64;
    for (u, nu) in adj.iter().enumerate() {
        for &v in nu.iter().filter(|&&v| v > u) {
            let nv = &adj[v];
            let (mut i, mut j) = (0, 0);
            while i < nu.len() && j < nv.len() {
                match nu[i].cmp(&nv[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        if nu[i] > v {
                            total += 1;
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
    }
    total
}

fn bfs_distances(adj: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].expect("queued nodes have a distance");
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Members of the largest connected component (smallest id wins ties).
fn largest_component(adj: &[Vec<usize>]) -> Vec<usize> {
    let mut seen = vec![false; adj.len()];
    let mut best: Vec<usize> = Vec::new();
    for start in 0..adj.len() {
        if seen[start] {
            continue;
        }
        let component: Vec<usize> = bfs_distances(adj, start)
            .iter()
            .enumerate()
            .filter_map(|(v, d)| d.map(|_| v))
            .collect();
        for &v in &component {
            seen[v] = true;
        }
        if component.len() > best.len() {
            best = component;
        }
    }
    best
}

/// Unit-capacity max flow between `s` and `t`, stopping once `cap` is reached.
fn unit_max_flow(adj: &[Vec<usize>], offsets: &[usize], rev: &[usize], s: usize, t: usize, cap: usize) -> usize {
    let mut residual = vec![1u8; rev.len()];
    let mut flow = 0;
    let mut parent_arc = vec![usize::MAX; adj.len()];
    while flow < cap {
        parent_arc.iter_mut().for_each(|p| *p = usize::MAX);
        let mut visited = vec![false; adj.len()];
        visited[s] = true;
        let mut queue = VecDeque::from([s]);
        let mut found = false;
        'bfs: while let Some(u) = queue.pop_front() {
            for (k, &v) in adj[u].iter().enumerate() {
                let arc = offsets[u] + k;
                if residual[arc] > 0 && !visited[v] {
                    visited[v] = true;
                    parent_arc[v] = arc;
                    if v == t {
                        found = true;
                        break 'bfs;
                    }
                    queue.push_back(v);
                }
            }
        }
        if !found {
            break;
        }
        let mut v = t;
        while v != s {
            let arc = parent_arc[v];
            residual[arc] -= 1;
            residual[rev[arc]] += 1;
            v = arc_source(offsets, arc);
        }
        flow += 1;
    }
    flow
}

fn arc_source(offsets: &[usize], arc: usize) -> usize {
    offsets.partition_point(|&o| o <= arc) - 1
}

/// Global minimum edge cut of an undirected simple graph.
pub fn edge_connectivity(adj: &[Vec<usize>]) -> usize {
    let n = adj.len();
    if n < 2 || largest_component(adj).len() < n {
        return 0;
    }
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for list in adj {
        offsets.push(offsets.last().unwrap() + list.len());
    }
    // rev[arc u->v] = arc v->u
    let mut rev = vec![0usize; offsets[n]];
    for u in 0..n {
        for (k, &v) in adj[u].iter().enumerate() {
            let back = adj[v].binary_search(&u).expect("projection is symmetric");
            rev[offsets[u] + k] = offsets[v] + back;
        }
    }
    let min_degree = adj.iter().map(Vec::len).min().unwrap_or(0);
    (1..n)
        .into_par_iter()
        .map(|t| unit_max_flow(adj, &offsets, &rev, 0, t, min_degree))
        .min()
        .unwrap_or(0)
}

pub fn graph_statistics(kg: &KnowledgeGraph) -> GraphStats {
    let nodes = kg.entity_count();
    let edges = kg.triple_count();
    let adj = undirected_projection(kg);

    let mut relations_per_node = vec![Vec::<RelationId>::new(); nodes];
    for t in kg.triples() {
        relations_per_node[t.head].push(t.relation);
        relations_per_node[t.tail].push(t.relation);
    }
    for rs in &mut relations_per_node {
        rs.sort_unstable();
        rs.dedup();
    }
    let multiplex_dyads = relations_per_node.iter().filter(|rs| rs.len() >= 2).count();

    let triangles = count_triangles(&adj);
    let wedges: u64 = adj
        .iter()
        .map(|l| {
            let d = l.len() as u64;
            d * d.saturating_sub(1) / 2
        })
        .sum();
    let open_triads = wedges - 3 * triangles;

    let degree_variance = if nodes == 0 {
        0.0
    } else {
        let mean = adj.iter().map(|l| l.len() as f64).sum::<f64>() / nodes as f64;
        adj.iter().map(|l| (l.len() as f64 - mean).powi(2)).sum::<f64>() / nodes as f64
    };

    let component = largest_component(&adj);
    let (diameter, distance_sum) = component
        .par_iter()
        .map(|&s| {
            let dist = bfs_distances(&adj, s);
            component.iter().fold((0usize, 0u64), |(m, sum), &v| {
                let d = dist[v].expect("same component");
                (m.max(d), sum + d as u64)
            })
        })
        .reduce(|| (0, 0), |a, b| (a.0.max(b.0), a.1 + b.1));
    let c = component.len();
    let average_shortest_path = if c < 2 {
        0.0
    } else {
        distance_sum as f64 / (c as f64 * (c as f64 - 1.0))
    };

    GraphStats {
        nodes,
        edges,
        density: density(nodes, edges),
        average_degree: average_degree(nodes, edges),
        multiplex_dyads,
        triads_possible: triads_possible(nodes),
        open_triads,
        degree_variance,
        edge_connectivity: edge_connectivity(&adj),
        diameter,
        average_shortest_path,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgbuild::Triple;

    fn kg(n: usize, relations: &[Relation], triples: &[(usize, usize, usize)]) -> KnowledgeGraph {
        KnowledgeGraph::new(
            (0..n).map(|i| format!("n{i}")).collect(),
            relations.to_vec(),
            triples.iter().map(|&(h, r, t)| Triple::new(h, r, t)),
        )
        .unwrap()
    }

    /// nodes(r0) = {a, b}, nodes(r1) = {a, b, c}.
    fn two_relation_kg() -> KnowledgeGraph {
        kg(3, &[Relation::AdSimilar, Relation::CrSimilar], &[(0, 0, 1), (0, 1, 1), (1, 1, 2)])
    }

    #[test]
    fn support_is_directional() {
        let g = two_relation_kg();
        assert_eq!(support(0, 1, &g).unwrap(), 1.0);
        assert_eq!(support(1, 0, &g).unwrap(), 2.0 / 3.0);
        assert_eq!(support(0, 0, &g).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_relations_have_zero_support_and_relatedness() {
        let g = kg(4, &[Relation::AdSimilar, Relation::VSimilar], &[(0, 0, 1), (2, 1, 3)]);
        assert_eq!(support(0, 1, &g).unwrap(), 0.0);
        assert_eq!(relatedness(0, 1, &g).unwrap(), 0.0);
    }

    #[test]
    fn empty_relation_has_undefined_support() {
        let g = kg(3, &[Relation::AdSimilar, Relation::VSimilar], &[(0, 0, 1)]);
        assert_eq!(support(1, 0, &g), Err(StatsError::UndefinedSupport(Relation::VSimilar)));
        let m = relatedness_matrix(&g).unwrap();
        assert_eq!(m.relatedness[0][0], Some(1.0));
        assert_eq!(m.relatedness[1][1], None);
    }

    #[test]
    fn hand_matrix() {
        let m = relatedness_matrix(&two_relation_kg()).unwrap();
        assert_eq!(m.relatedness[0][1], Some(0.8));
        assert_eq!(m.relatedness[1][0], Some(0.8));
        assert_eq!(m.relatedness[0][0], Some(1.0));
        assert_eq!(m.relatedness[1][1], Some(1.0));
    }

    #[test]
    fn single_relation_matrix() {
        let m = relatedness_matrix(&kg(2, &[Relation::SSimilar], &[(0, 0, 1)])).unwrap();
        assert_eq!(m.relatedness, vec![vec![Some(1.0)]]);
    }

    #[test]
    fn closed_forms_at_store_scale() {
        assert_eq!(triads_possible(1793), 959_097_216);
        assert!((density(1793, 21433) - 0.00667).abs() < 1e-5);
        assert!((average_degree(1793, 21433) - 11.95).abs() < 0.01);
    }

    #[test]
    fn complete_directed_triangle() {
        let g = kg(
            3,
            &[Relation::AdSimilar],
            &[(0, 0, 1), (1, 0, 0), (0, 0, 2), (2, 0, 0), (1, 0, 2), (2, 0, 1)],
        );
        let s = graph_statistics(&g);
        assert_eq!(s.density, 1.0);
        assert_eq!(s.diameter, 1);
        assert_eq!(s.average_shortest_path, 1.0);
        assert_eq!(s.open_triads, 0);
        assert_eq!(s.edge_connectivity, 2);
    }

    #[test]
    fn path_graph() {
        let g = kg(3, &[Relation::AdSimilar], &[(0, 0, 1), (1, 0, 2)]);
        let s = graph_statistics(&g);
        assert_eq!(s.open_triads, 1);
        assert_eq!(s.edge_connectivity, 1);
        assert_eq!(s.diameter, 2);
        assert_eq!(s.triads_possible, 1);
        assert_eq!(s.multiplex_dyads, 0);
    }

    #[test]
    fn disconnected_graph_uses_largest_component() {
        let g = kg(5, &[Relation::AdSimilar], &[(0, 0, 1), (1, 0, 2), (3, 0, 4)]);
        let s = graph_statistics(&g);
        assert_eq!(s.edge_connectivity, 0);
        assert_eq!(s.diameter, 2);
        assert!((s.average_shortest_path - 8.0 / 6.0).abs() < 1e-12);
    }
}
