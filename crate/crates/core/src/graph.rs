//! Uniformly random simple d-regular graphs.
//!
//! Sampling uses the pairing (configuration) model: `n*d` half-edges are
//! shuffled and matched consecutively, and the whole matching is thrown away
//! whenever it produces a self-loop or a repeated pair. Conditioned on
//! simplicity, every labelled simple d-regular graph is equally likely.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{invalid, LabError, Result};
use crate::rng::{rng_from_seed, LabRng};

/// A simple d-regular graph on vertices `0..n_vertices`.
///
/// Edges are stored as `(u, v)` with `u < v`, sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegularGraph {
    n_vertices: usize,
    degree: usize,
    edges: Vec<(usize, usize)>,
}

impl RegularGraph {
    /// Builds a graph from an arbitrary edge list, canonicalising the
    /// orientation and order of the pairs. No regularity check is made;
    /// use [`audit_regularity`] for that.
    pub fn from_edges(n_vertices: usize, degree: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut edges: Vec<(usize, usize)> = edges
            .into_iter()
            .map(|(u, v)| if u <= v { (u, v) } else { (v, u) })
            .collect();
        edges.sort_unstable();
        Self { n_vertices, degree, edges }
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)));
        Self::from_edges(n, n.saturating_sub(1), edges)
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn without_edge(&self, edge: (usize, usize)) -> Self {
        let e = if edge.0 <= edge.1 { edge } else { (edge.1, edge.0) };
        Self {
            n_vertices: self.n_vertices,
            degree: self.degree,
            edges: self.edges.iter().copied().filter(|&x| x != e).collect(),
        }
    }

    /// Neighbour lists, each sorted ascending.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::with_capacity(self.degree); self.n_vertices];
        for &(u, v) in &self.edges {
            if u < self.n_vertices && v < self.n_vertices {
                adj[u].push(v);
                if u != v {
                    adj[v].push(u);
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Edge-list text: `"n d"` header, then one `"u v"` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(12 * (self.edges.len() + 1));
        let _ = writeln!(out, "{} {}", self.n_vertices, self.degree);
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }
}

impl FromStr for RegularGraph {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| LabError::Parse("empty edge list".into()))?;
        let (n, d) = parse_pair(header)?;
        let edges = lines.map(parse_pair).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_edges(n, d, edges))
    }
}

fn parse_pair(line: &str) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace().map(|t| {
        t.parse::<usize>()
            .map_err(|e| LabError::Parse(format!("bad integer `{t}`: {e}")))
    });
    match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) => Ok((a?, b?)),
        _ => Err(LabError::Parse(format!("expected two integers, got `{line}`"))),
    }
}

/// Samples a uniformly random simple `d`-regular graph on `n` vertices.
///
/// Deterministic in `(n, d, seed)`.
pub fn sample_regular_graph(n: usize, d: usize, seed: u64) -> Result<RegularGraph> {
    validate_params(n, d)?;
    let mut rng = rng_from_seed(seed);
    Ok(sample_with_rng(n, d, &mut rng))
}

fn validate_params(n: usize, d: usize) -> Result<()> {
    if d < 3 {
        return Err(invalid(format!("degree must be at least 3, got {d}")));
    }
    if n <= d {
        return Err(invalid(format!("need n > d, got n = {n}, d = {d}")));
    }
    if (n * d) % 2 == 1 {
        return Err(LabError::Parity { n, d });
    }
    Ok(())
}

fn sample_with_rng(n: usize, d: usize, rng: &mut LabRng) -> RegularGraph {
    let mut points: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    let mut adj: Vec<Vec<usize>> = vec![Vec::with_capacity(d); n];
    'restart: loop {
        points.shuffle(rng);
        for list in &mut adj {
            list.clear();
        }
        for pair in points.chunks_exact(2) {
            let (u, v) = (pair[0], pair[1]);
            if u == v || adj[u].contains(&v) {
                continue 'restart;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        break;
    }
    let edges = adj
        .iter()
        .enumerate()
        .flat_map(|(u, list)| list.iter().filter(move |&&v| u < v).map(move |&v| (u, v)));
    RegularGraph::from_edges(n, d, edges)
}

/// True iff the graph is simple, every vertex has exactly `degree`
/// neighbours, and `n * degree` is even.
pub fn audit_regularity(g: &RegularGraph) -> bool {
    let n = g.n_vertices;
    if n == 0 || (n * g.degree) % 2 == 1 || g.edges.len() * 2 != n * g.degree {
        return false;
    }
    let mut deg = vec![0usize; n];
    for (k, &(u, v)) in g.edges.iter().enumerate() {
        if u >= v || v >= n {
            return false;
        }
        if k > 0 && g.edges[k - 1] == (u, v) {
            return false;
        }
        deg[u] += 1;
        deg[v] += 1;
    }
    deg.iter().all(|&x| x == g.degree)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k4_is_the_only_cubic_graph_on_four_vertices() {
        for seed in 0..20 {
            let g = sample_regular_graph(4, 3, seed).unwrap();
            assert_eq!(g, RegularGraph::complete(4));
        }
    }

    #[test]
    fn parity_and_size_errors() {
        assert!(matches!(sample_regular_graph(5, 3, 1), Err(LabError::Parity { n: 5, d: 3 })));
        assert!(sample_regular_graph(3, 3, 1).is_err());
        assert!(sample_regular_graph(10, 2, 1).is_err());
    }

    #[test]
    fn sampler_output_passes_audit() {
        let g = sample_regular_graph(100, 3, 7).unwrap();
        assert!(audit_regularity(&g));
        assert_eq!(g.edges().len(), 150);
        assert!(g.adjacency().iter().all(|l| l.len() == 3));
    }

    #[test]
    fn audit_rejects_broken_graphs() {
        let k4 = RegularGraph::complete(4);
        assert!(audit_regularity(&k4));
        assert!(!audit_regularity(&k4.without_edge((0, 1))));
        let looped = RegularGraph::from_edges(2, 1, [(0, 0), (1, 1)]);
        assert!(!audit_regularity(&looped));
        let multi = RegularGraph::from_edges(2, 2, [(0, 1), (0, 1)]);
        assert!(!audit_regularity(&multi));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = sample_regular_graph(20, 3, 3).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("20 3\n"));
        let back: RegularGraph = text.parse().unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn same_seed_same_graph() {
        let a = sample_regular_graph(200, 4, 11).unwrap();
        let b = sample_regular_graph(200, 4, 11).unwrap();
        let c = sample_regular_graph(200, 4, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
