//! Weighted undirected graphs, regularized Laplacians and nested
//! neighborhood stacks.
//!
//! Graphs are stored as a sorted edge list plus an adjacency index. Dense
//! matrices are only materialized for the (small) subgraphs a kernel
//! evaluation actually touches.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spd::Cholesky;

/// A weighted undirected graph with optional per-vertex feature rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    adjacency: Vec<Vec<(usize, f64)>>,
    features: Option<DMatrix<f64>>,
    id: String,
}

impl Graph {
    /// Builds a graph on `n` vertices. Edge endpoints may be given in either
    /// order; they are normalized to `i < j` and sorted.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut normalized = Vec::new();
        for (a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) references a vertex outside [0, {n})"
                )));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop at vertex {a}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) has non-positive weight {w}"
                )));
            }
            normalized.push((a.min(b), a.max(b), w));
        }
        normalized.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        if let Some(w) = normalized.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::invalid(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j, w) in &normalized {
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for row in &mut adjacency {
            row.sort_by_key(|&(u, _)| u);
        }
        Ok(Graph {
            n,
            edges: normalized,
            adjacency,
            features: None,
            id: String::new(),
        })
    }

    /// Unit-weight graph from vertex pairs.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        Graph::new(n, pairs.iter().map(|&(a, b)| (a, b, 1.0)))
    }

    /// Attaches an `n × d` feature matrix (one row per vertex).
    pub fn with_features(mut self, features: DMatrix<f64>) -> Result<Self> {
        if features.nrows() != self.n {
            return Err(Error::DimensionMismatch {
                what: "feature rows vs vertex count",
                left: features.nrows(),
                right: self.n,
            });
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn weighted_degree(&self, v: usize) -> f64 {
        self.adjacency[v].iter().map(|&(_, w)| w).sum()
    }

    pub fn features(&self) -> Option<&DMatrix<f64>> {
        self.features.as_ref()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.as_ref().map(|f| f.ncols())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Hop distances from `source`, ignoring edge weights. `None` marks
    /// unreachable vertices.
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for &(w, _) in &self.adjacency[u] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Relabels vertices so that old vertex `v` becomes `perm[v]`. Feature
    /// rows move with their vertices.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "permutation length vs vertex count",
                left: perm.len(),
                right: self.n,
            });
        }
        let mut seen = vec![false; self.n];
        for &p in perm {
            if p >= self.n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::invalid("not a permutation"));
            }
        }
        let mut g = Graph::new(
            self.n,
            self.edges.iter().map(|&(i, j, w)| (perm[i], perm[j], w)),
        )?
        .with_id(self.id.clone());
        if let Some(f) = &self.features {
            let mut pf = DMatrix::zeros(f.nrows(), f.ncols());
            for v in 0..self.n {
                pf.set_row(perm[v], &f.row(v));
            }
            g.features = Some(pf);
        }
        Ok(g)
    }
}

/// `D − A + ηI` for a graph, stored densely.
#[derive(Clone, Debug)]
pub struct RegularizedLaplacian {
    pub matrix: DMatrix<f64>,
    pub eta: f64,
}

impl RegularizedLaplacian {
    pub fn factor(&self) -> Result<Cholesky> {
        Cholesky::new(&self.matrix)
    }
}

pub fn laplacian(g: &Graph, eta: f64) -> Result<RegularizedLaplacian> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::invalid(format!("eta must be positive, got {eta}")));
    }
    let mut m = DMatrix::zeros(g.n, g.n);
    for &(i, j, w) in &g.edges {
        m[(i, j)] -= w;
        m[(j, i)] -= w;
        m[(i, i)] += w;
        m[(j, j)] += w;
    }
    for v in 0..g.n {
        m[(v, v)] += eta;
    }
    Ok(RegularizedLaplacian { matrix: m, eta })
}

/// Vertices within `r` hops of `v`, sorted ascending.
pub fn ball(g: &Graph, v: usize, r: usize) -> Vec<usize> {
    g.hop_distances(v)
        .iter()
        .enumerate()
        .filter_map(|(u, d)| d.filter(|&d| d <= r).map(|_| u))
        .collect()
}

/// An induced subgraph together with the parent index of each local vertex.
#[derive(Clone, Debug)]
pub struct Subgraph {
    pub graph: Graph,
    pub parent: Vec<usize>,
}

pub fn induced_subgraph(g: &Graph, vs: &[usize]) -> Result<Subgraph> {
    if vs.is_empty() {
        return Err(Error::invalid("induced subgraph of an empty vertex set"));
    }
    let mut parent = vs.to_vec();
    parent.sort_unstable();
    parent.dedup();
    if let Some(&bad) = parent.iter().find(|&&v| v >= g.n) {
        return Err(Error::invalid(format!("vertex {bad} out of range")));
    }
    let mut local = vec![usize::MAX; g.n];
    for (k, &v) in parent.iter().enumerate() {
        local[v] = k;
    }
    let edges = g
        .edges
        .iter()
        .filter(|&&(i, j, _)| local[i] != usize::MAX && local[j] != usize::MAX)
        .map(|&(i, j, w)| (local[i], local[j], w));
    let mut sub = Graph::new(parent.len(), edges)?.with_id(g.id.clone());
    if let Some(f) = &g.features {
        sub.features = Some(f.select_rows(&parent));
    }
    Ok(Subgraph { graph: sub, parent })
}

/// For every vertex, the nested sets `N_1(v) ⊆ … ⊆ N_L(v)` and their
/// induced subgraphs.
#[derive(Clone, Debug)]
pub struct NeighborhoodStack {
    pub radius: usize,
    pub levels: usize,
    sets: Vec<Vec<Vec<usize>>>,
    subgraphs: Vec<Vec<Subgraph>>,
}

impl NeighborhoodStack {
    /// `N_level(v)`; `level` is 1-based.
    pub fn set(&self, v: usize, level: usize) -> &[usize] {
        &self.sets[v][level - 1]
    }

    pub fn subgraph(&self, v: usize, level: usize) -> &Subgraph {
        &self.subgraphs[v][level - 1]
    }

    pub fn vertex_count(&self) -> usize {
        self.sets.len()
    }
}

/// `N_1(v)` is the hop ball of radius `radius`; each further level is the
/// union of the previous level's neighborhoods of its members, which
/// doubles the effective radius.
pub fn build_neighborhood_stack(g: &Graph, radius: usize, levels: usize) -> Result<NeighborhoodStack> {
    if levels == 0 {
        return Err(Error::invalid("neighborhood stack needs at least one level"));
    }
    if radius == 0 {
        return Err(Error::invalid("base radius must be positive"));
    }
    let mut sets: Vec<Vec<Vec<usize>>> = (0..g.n).map(|v| vec![ball(g, v, radius)]).collect();
    let mut mark = vec![false; g.n];
    for level in 1..levels {
        let prev: Vec<&Vec<usize>> = sets.iter().map(|s| &s[level - 1]).collect();
        let mut next = Vec::with_capacity(g.n);
        for v in 0..g.n {
            let mut acc = Vec::new();
            for &w in prev[v] {
                for &u in prev[w] {
                    if !mark[u] {
                        mark[u] = true;
                        acc.push(u);
                    }
                }
            }
            for &u in &acc {
                mark[u] = false;
            }
            acc.sort_unstable();
            next.push(acc);
        }
        for (v, s) in next.into_iter().enumerate() {
            sets[v].push(s);
        }
    }
    let subgraphs = sets
        .iter()
        .map(|per_level| {
            per_level
                .iter()
                .map(|s| induced_subgraph(g, s))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NeighborhoodStack {
        radius,
        levels,
        sets,
        subgraphs,
    })
}
