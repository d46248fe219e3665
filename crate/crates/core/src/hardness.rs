//! Reduction from k-clique to triangular MAP, plus brute-force oracles.
//!
//! The graph is padded with `N` extra vertices joined to everything. Pairs
//! in the padded edge set get probability `q > 1/2` and every other pair 0,
//! so a MAP partition absorbs the padding and one maximum clique of the
//! original graph into a single block.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::partition::{n_pairs, pairs};
use crate::triangular::{exact_map_constrained, EdgeProbabilities, MapResult};

pub const CLIQUE_BRUTEFORCE_GUARD: usize = 16;

/// Undirected graph on `0..n_vertices` without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGraph {
    n_vertices: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl SimpleGraph {
    pub fn new(n_vertices: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::contract(format!("self-loop on vertex {}", u + 1)));
            }
            if u >= n_vertices || v >= n_vertices {
                return Err(Error::contract(format!(
                    "edge ({}, {}) leaves the vertex range 1..={n_vertices}",
                    u + 1,
                    v + 1
                )));
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(SimpleGraph {
            n_vertices,
            edges: set,
        })
    }

    /// Parses an edge list: one `u v` pair per line, 1-based, `#` starts a
    /// comment. The vertex count is the largest id unless `n_vertices` says
    /// otherwise.
    pub fn parse_edge_list(text: &str, n_vertices: Option<usize>) -> Result<Self> {
        let mut edges = Vec::new();
        let mut max_id = 0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let ids: Vec<&str> = line.split_whitespace().collect();
            let bad = || {
                Error::Parse(format!(
                    "line {}: expected two vertex ids, got {raw:?}",
                    lineno + 1
                ))
            };
            if ids.len() != 2 {
                return Err(bad());
            }
            let u: usize = ids[0].parse().map_err(|_| bad())?;
            let v: usize = ids[1].parse().map_err(|_| bad())?;
            if u == 0 || v == 0 {
                return Err(Error::Parse(format!(
                    "line {}: vertex ids start at 1",
                    lineno + 1
                )));
            }
            max_id = max_id.max(u).max(v);
            edges.push((u - 1, v - 1));
        }
        let n = match n_vertices {
            Some(n) if n < max_id => {
                return Err(Error::Parse(format!(
                    "edge list mentions vertex {max_id} but only {n} vertices were declared"
                )))
            }
            Some(n) => n,
            None => max_id,
        };
        SimpleGraph::new(n, edges).map_err(|e| match e {
            Error::Contract(m) => Error::Parse(m),
            other => other,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }
}

/// Size of a maximum clique, by subset enumeration.
pub fn max_clique_bruteforce(g: &SimpleGraph) -> Result<usize> {
    let n = g.n_vertices();
    if n > CLIQUE_BRUTEFORCE_GUARD {
        return Err(Error::Capacity(format!(
            "brute-force clique search supports at most {CLIQUE_BRUTEFORCE_GUARD} vertices, got {n}"
        )));
    }
    let mut adj = vec![0u32; n];
    for (u, v) in g.edges() {
        adj[u] |= 1 << v;
        adj[v] |= 1 << u;
    }
    let mut best = 0;
    for mask in 1u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        if size <= best {
            continue;
        }
        let is_clique = (0..n)
            .filter(|&v| mask & (1 << v) != 0)
            .all(|v| (mask & !(1 << v)) & !adj[v] == 0);
        if is_clique {
            best = size;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionInstance {
    pub original: SimpleGraph,
    /// Original vertices first, then the `n_extra` padding vertices.
    pub graph_prime: SimpleGraph,
    pub ep: EdgeProbabilities,
    pub n_extra: usize,
    pub q: f64,
    pub k: usize,
    pub solution: Option<MapResult>,
}

impl ReductionInstance {
    fn padding(&self) -> std::ops::Range<usize> {
        self.original.n_vertices()..self.graph_prime.n_vertices()
    }

    /// Pairs outside the padded edge set.
    pub fn forbidden_pairs(&self) -> Vec<(usize, usize)> {
        pairs(self.graph_prime.n_vertices())
            .filter(|&(i, j)| !self.graph_prime.has_edge(i, j))
            .collect()
    }
}

pub fn padding_size(g: &SimpleGraph, slack: usize) -> usize {
    (2 * g.n_edges() + 2).max(2 * g.n_vertices()) + 1 + slack
}

pub fn build_reduction(g: &SimpleGraph, k: usize, q: f64, slack: usize) -> Result<ReductionInstance> {
    if !(q > 0.5 && q < 1.0) {
        return Err(Error::contract(format!("q must lie in (1/2, 1), got {q}")));
    }
    if k > g.n_vertices() {
        return Err(Error::contract(format!(
            "k = {k} exceeds the {} vertices of the graph",
            g.n_vertices()
        )));
    }
    let nv = g.n_vertices();
    let extra = padding_size(g, slack);
    let total = nv + extra;
    let mut edges: Vec<(usize, usize)> = g.edges().collect();
    for a in nv..total {
        for b in 0..a {
            edges.push((b, a));
        }
    }
    let graph_prime = SimpleGraph::new(total, edges)?;
    let mut p = vec![0.0; n_pairs(total)];
    for ((i, j), slot) in pairs(total).zip(p.iter_mut()) {
        if graph_prime.has_edge(i, j) {
            *slot = q;
        }
    }
    Ok(ReductionInstance {
        original: g.clone(),
        graph_prime,
        ep: EdgeProbabilities::new(total, p)?,
        n_extra: extra,
        q,
        k,
        solution: None,
    })
}

/// Solves the instance's MAP and reports whether the original graph has a
/// `k`-clique.
pub fn decide_kclique_via_map(inst: &mut ReductionInstance) -> Result<bool> {
    let map = exact_map_constrained(&inst.ep, &inst.forbidden_pairs())?;
    let nv = inst.original.n_vertices();
    // Blocks are cliques of the padded graph, so the MAP edges restricted to
    // the original graph split into one component per block.
    let largest = map
        .partition
        .blocks()
        .iter()
        .map(|b| b.iter().filter(|&&v| v < nv).count())
        .max()
        .unwrap_or(0);
    inst.solution = Some(map);
    Ok(largest >= inst.k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructureReport {
    /// Every padding pair is an edge of the MAP.
    pub padding_complete: bool,
    /// The original vertices sharing the padding's block form a maximum
    /// clique of the original graph.
    pub attached_to_max_clique: bool,
}

impl StructureReport {
    pub fn all_pass(&self) -> bool {
        self.padding_complete && self.attached_to_max_clique
    }
}

pub fn map_structure_report(inst: &ReductionInstance) -> Result<StructureReport> {
    let map = inst
        .solution
        .as_ref()
        .ok_or_else(|| Error::contract("instance has not been solved"))?;
    let p = &map.partition;
    let padding = inst.padding();
    let first = padding.start;
    let padding_complete = padding.clone().all(|v| p.same_block(first, v));
    let attached: Vec<usize> = (0..inst.original.n_vertices())
        .filter(|&v| p.same_block(first, v))
        .collect();
    let is_clique = attached
        .iter()
        .enumerate()
        .all(|(a, &u)| attached[a + 1..].iter().all(|&v| inst.original.has_edge(u, v)));
    let attached_to_max_clique = is_clique && attached.len() == max_clique_bruteforce(&inst.original)?;
    Ok(StructureReport {
        padding_complete,
        attached_to_max_clique,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> SimpleGraph {
        SimpleGraph::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn path3() -> SimpleGraph {
        SimpleGraph::new(3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn padding_sizes() {
        let inst = build_reduction(&triangle(), 3, 0.75, 0).unwrap();
        assert_eq!(inst.n_extra, 9);
        assert_eq!(inst.graph_prime.n_vertices(), 12);
        let edge = SimpleGraph::new(2, [(0, 1)]).unwrap();
        let inst = build_reduction(&edge, 1, 0.75, 0).unwrap();
        assert_eq!(inst.n_extra, 5);
        assert_eq!(inst.graph_prime.n_vertices(), 7);
    }

    #[test]
    fn probabilities_vanish_off_padded_edges() {
        let inst = build_reduction(&path3(), 2, 0.75, 1).unwrap();
        let n = inst.graph_prime.n_vertices();
        for (i, j) in pairs(n) {
            let expected = if inst.graph_prime.has_edge(i, j) {
                0.75
            } else {
                0.0
            };
            assert_eq!(inst.ep.get(i, j), expected);
        }
        assert_eq!(inst.forbidden_pairs(), vec![(0, 2)]);
    }

    #[test]
    fn rejects_small_q() {
        assert!(matches!(
            build_reduction(&triangle(), 2, 0.5, 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn triangle_has_three_clique() {
        let mut inst = build_reduction(&triangle(), 3, 0.75, 0).unwrap();
        assert!(decide_kclique_via_map(&mut inst).unwrap());
        assert!(map_structure_report(&inst).unwrap().all_pass());
    }

    #[test]
    fn path_has_no_three_clique() {
        let mut inst = build_reduction(&path3(), 3, 0.75, 0).unwrap();
        assert!(!decide_kclique_via_map(&mut inst).unwrap());
        assert!(map_structure_report(&inst).unwrap().all_pass());
    }

    #[test]
    fn single_edge_report() {
        let edge = SimpleGraph::new(2, [(0, 1)]).unwrap();
        let mut inst = build_reduction(&edge, 1, 0.75, 0).unwrap();
        assert!(decide_kclique_via_map(&mut inst).unwrap());
        assert!(map_structure_report(&inst).unwrap().all_pass());
    }

    #[test]
    fn unsolved_report_is_an_error() {
        let inst = build_reduction(&triangle(), 3, 0.75, 0).unwrap();
        assert!(matches!(map_structure_report(&inst), Err(Error::Contract(_))));
    }

    #[test]
    fn brute_force_clique_sizes() {
        assert_eq!(
            max_clique_bruteforce(&SimpleGraph::new(3, []).unwrap()).unwrap(),
            1
        );
        let k4 = SimpleGraph::new(4, pairs(4)).unwrap();
        assert_eq!(max_clique_bruteforce(&k4).unwrap(), 4);
        let c5 = SimpleGraph::new(5, (0..5).map(|i| (i, (i + 1) % 5))).unwrap();
        assert_eq!(max_clique_bruteforce(&c5).unwrap(), 2);
        let big = SimpleGraph::new(17, []).unwrap();
        assert!(max_clique_bruteforce(&big).unwrap_err().is_capacity());
    }

    #[test]
    fn parses_edge_lists() {
        let g = SimpleGraph::parse_edge_list("# triangle\n1 2\n2 3 # closing\n\n1 3\n", None).unwrap();
        assert_eq!(g, triangle());
        let g = SimpleGraph::parse_edge_list("1 2\n", Some(4)).unwrap();
        assert_eq!(g.n_vertices(), 4);
        assert!(SimpleGraph::parse_edge_list("1 1\n", None).is_err());
        assert!(SimpleGraph::parse_edge_list("1 x\n", None).is_err());
        assert!(SimpleGraph::parse_edge_list("0 1\n", None).is_err());
        assert!(SimpleGraph::parse_edge_list("1 5\n", Some(3)).is_err());
    }
}
