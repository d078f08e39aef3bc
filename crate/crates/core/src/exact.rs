//! Exact multiscale kernels by on-demand recursion.
//!
//! `𝔎_1(v, v′)` is the FLG kernel between the level-1 neighborhoods of `v`
//! and `v′` induced from the base kernel; `𝔎_ℓ` is the FLG kernel between
//! level-`ℓ` neighborhoods induced from `𝔎_{ℓ−1}`; the MLG kernel is the FLG
//! kernel between whole graphs induced from `𝔎_L`.
//!
//! Every `𝔎_ℓ` value is computed at most once per [`ExactEngine`] and kept
//! in a shared table keyed by globally unique vertex identities. Vertices
//! whose neighborhoods share a [`SubgraphFingerprint`] are collapsed onto a
//! single representative before lookup. Demand is resolved top-down and
//! evaluated bottom-up, one level at a time, so there is no deep call stack.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use dashmap::DashMap;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flg::{flg_from_joint_gram, FlgParams};
use crate::gram::GramMatrix;
use crate::graph::{build_neighborhood_stack, laplacian, Graph, NeighborhoodStack};
use crate::spd::Cholesky;

pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// A vertex of a specific graph in the dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId {
    pub graph: usize,
    pub vertex: usize,
}

impl VertexId {
    pub fn new(graph: usize, vertex: usize) -> Self {
        VertexId { graph, vertex }
    }
}

/// Vertex-level kernel the hierarchy is built on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BaseKernelSpec {
    /// Dot product of the graphs' vertex feature rows.
    #[default]
    FeatureDot,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlsParams {
    pub levels: usize,
    pub radius: usize,
    pub flg: FlgParams,
    pub base: BaseKernelSpec,
    /// Collapse vertices with matching neighborhood fingerprints.
    pub dedup: bool,
    /// Maximum number of FLG evaluations per engine.
    pub budget: u64,
}

impl Default for MlsParams {
    fn default() -> Self {
        MlsParams {
            levels: 2,
            radius: 1,
            flg: FlgParams::new(0.1, 0.1),
            base: BaseKernelSpec::FeatureDot,
            dedup: true,
            budget: DEFAULT_BUDGET,
        }
    }
}

impl MlsParams {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::invalid("levels must be at least 1"));
        }
        if self.radius == 0 {
            return Err(Error::invalid("radius must be at least 1"));
        }
        self.flg.validate()
    }
}

fn quantize(x: f64) -> i64 {
    (x * 1e6).round() as i64
}

/// Reordering-invariant summary of a labeled subgraph. Isomorphic
/// subgraphs with equal vertex labels always agree; the converse does not
/// hold in general.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubgraphFingerprint {
    pub vertices: usize,
    pub edges: usize,
    pub degrees: Vec<i64>,
    pub labels: Vec<Vec<i64>>,
    /// `(degree, label)` per vertex, sorted.
    pub profiles: Vec<(i64, Vec<i64>)>,
    pub eigenvalues: Vec<i64>,
}

impl SubgraphFingerprint {
    /// `labels[i]` is the (already quantized) label of local vertex `i`.
    pub fn new(g: &Graph, labels: Vec<Vec<i64>>) -> Self {
        let n = g.vertex_count();
        let degs: Vec<i64> = (0..n).map(|v| quantize(g.weighted_degree(v))).collect();
        let mut profiles: Vec<(i64, Vec<i64>)> = degs.iter().cloned().zip(labels.iter().cloned()).collect();
        profiles.sort();
        let mut degrees = degs;
        degrees.sort_unstable();
        let mut labels = labels;
        labels.sort();
        let mut lap = DMatrix::<f64>::zeros(n, n);
        for &(i, j, w) in g.edges() {
            lap[(i, j)] -= w;
            lap[(j, i)] -= w;
            lap[(i, i)] += w;
            lap[(j, j)] += w;
        }
        let mut eigenvalues: Vec<i64> = SymmetricEigen::new(lap).eigenvalues.iter().map(|&x| quantize(x)).collect();
        eigenvalues.sort_unstable();
        SubgraphFingerprint {
            vertices: n,
            edges: g.edge_count(),
            degrees,
            labels,
            profiles,
            eigenvalues,
        }
    }
}

/// Memo table shared by every evaluation of one engine.
#[derive(Debug, Default)]
pub struct KernelCache {
    values: DashMap<(usize, VertexId, VertexId), f64>,
    fingerprints: HashMap<(usize, SubgraphFingerprint), VertexId>,
    evaluations: AtomicU64,
}

impl KernelCache {
    fn key(level: usize, a: VertexId, b: VertexId) -> (usize, VertexId, VertexId) {
        if a <= b {
            (level, a, b)
        } else {
            (level, b, a)
        }
    }

    pub fn get(&self, level: usize, a: VertexId, b: VertexId) -> Option<f64> {
        self.values.get(&Self::key(level, a, b)).map(|v| *v)
    }

    /// Stores a value unless one is already present; returns the stored value.
    pub fn insert(&self, level: usize, a: VertexId, b: VertexId, value: f64) -> f64 {
        *self.values.entry(Self::key(level, a, b)).or_insert(value)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of FLG evaluations performed so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn distinct_fingerprints(&self) -> usize {
        self.fingerprints.len()
    }
}

type Pair = (VertexId, VertexId);

/// Exact MLS/MLG evaluator over a fixed collection of graphs.
pub struct ExactEngine<'a> {
    graphs: &'a [Graph],
    params: MlsParams,
    stacks: Vec<NeighborhoodStack>,
    /// `[graph][vertex][level-1]` factor of the neighborhood Laplacian.
    factors: Vec<Vec<Vec<Cholesky>>>,
    whole: Vec<Cholesky>,
    /// `[level-1][graph][vertex]` representative used for cache keys.
    reps: Vec<Vec<Vec<VertexId>>>,
    cache: KernelCache,
}

impl<'a> ExactEngine<'a> {
    pub fn new(graphs: &'a [Graph], params: MlsParams) -> Result<Self> {
        params.validate()?;
        let dim = graphs.first().and_then(|g| g.feature_dim());
        for g in graphs {
            match (g.feature_dim(), dim) {
                (None, _) => return Err(Error::invalid(format!("graph {:?} has no vertex features", g.id()))),
                (Some(d), Some(d0)) if d != d0 => {
                    return Err(Error::DimensionMismatch {
                        what: "vertex feature width",
                        left: d,
                        right: d0,
                    })
                }
                _ => {}
            }
        }
        let eta = params.flg.eta;
        let stacks = graphs
            .iter()
            .map(|g| build_neighborhood_stack(g, params.radius, params.levels))
            .collect::<Result<Vec<_>>>()?;
        let factors = stacks
            .iter()
            .map(|s| {
                (0..s.vertex_count())
                    .map(|v| {
                        (1..=params.levels)
                            .map(|l| laplacian(&s.subgraph(v, l).graph, eta)?.factor())
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let whole = graphs
            .iter()
            .map(|g| laplacian(g, eta)?.factor())
            .collect::<Result<Vec<_>>>()?;
        let mut engine = ExactEngine {
            graphs,
            params,
            stacks,
            factors,
            whole,
            reps: Vec::new(),
            cache: KernelCache::default(),
        };
        engine.assign_representatives();
        Ok(engine)
    }

    fn assign_representatives(&mut self) {
        let identity: Vec<Vec<VertexId>> = self
            .graphs
            .iter()
            .enumerate()
            .map(|(gi, g)| (0..g.vertex_count()).map(|v| VertexId::new(gi, v)).collect())
            .collect();
        if !self.params.dedup {
            self.reps = vec![identity; self.params.levels];
            return;
        }
        for level in 1..=self.params.levels {
            let mut reps = identity.clone();
            for (gi, g) in self.graphs.iter().enumerate() {
                for v in 0..g.vertex_count() {
                    let sub = self.stacks[gi].subgraph(v, level);
                    let labels = sub
                        .parent
                        .iter()
                        .map(|&p| self.vertex_label(level - 1, VertexId::new(gi, p)))
                        .collect();
                    let fp = SubgraphFingerprint::new(&sub.graph, labels);
                    reps[gi][v] = *self
                        .cache
                        .fingerprints
                        .entry((level, fp))
                        .or_insert(VertexId::new(gi, v));
                }
            }
            self.reps.push(reps);
        }
    }

    /// Label a vertex carries into a level-`level + 1` fingerprint.
    fn vertex_label(&self, level: usize, v: VertexId) -> Vec<i64> {
        if level == 0 {
            let f = self.graphs[v.graph].features().expect("validated in new");
            f.row(v.vertex).iter().map(|&x| quantize(x)).collect()
        } else {
            let r = self.reps[level - 1][v.graph][v.vertex];
            vec![r.graph as i64, r.vertex as i64]
        }
    }

    pub fn params(&self) -> &MlsParams {
        &self.params
    }

    pub fn cache(&self) -> &KernelCache {
        &self.cache
    }

    pub fn stack(&self, graph: usize) -> &NeighborhoodStack {
        &self.stacks[graph]
    }

    pub fn representative(&self, level: usize, v: VertexId) -> VertexId {
        self.reps[level - 1][v.graph][v.vertex]
    }

    fn base_value(&self, a: VertexId, b: VertexId) -> f64 {
        match self.params.base {
            BaseKernelSpec::FeatureDot => {
                let fa = self.graphs[a.graph].features().expect("validated in new");
                let fb = self.graphs[b.graph].features().expect("validated in new");
                fa.row(a.vertex).dot(&fb.row(b.vertex))
            }
        }
    }

    /// Canonical cache pair for `𝔎_level(a, b)`, or `None` when the value is
    /// trivially 1 (same representative).
    fn canonical(&self, level: usize, a: VertexId, b: VertexId) -> Option<Pair> {
        let (ra, rb) = (self.representative(level, a), self.representative(level, b));
        match ra.cmp(&rb) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some((ra, rb)),
            std::cmp::Ordering::Greater => Some((rb, ra)),
        }
    }

    /// `𝔎_level(a, b)` for `level ≥ 1` (already computed), or the base kernel
    /// for `level == 0`.
    fn value(&self, level: usize, a: VertexId, b: VertexId) -> f64 {
        if level == 0 {
            return self.base_value(a, b);
        }
        match self.canonical(level, a, b) {
            None => 1.0,
            Some((x, y)) => self
                .cache
                .get(level, x, y)
                .expect("demanded values are computed before use"),
        }
    }

    fn members(&self, level: usize, v: VertexId) -> impl Iterator<Item = VertexId> + '_ {
        self.stacks[v.graph]
            .set(v.vertex, level)
            .iter()
            .map(move |&p| VertexId::new(v.graph, p))
    }

    /// Makes sure every requested `𝔎_level` pair is in the cache.
    fn ensure(&self, level: usize, pairs: impl IntoIterator<Item = Pair>) -> Result<()> {
        let mut demand: Vec<Vec<Pair>> = vec![Vec::new(); level + 1];
        demand[level] = pairs
            .into_iter()
            .filter_map(|(a, b)| self.canonical(level, a, b))
            .filter(|&(a, b)| self.cache.get(level, a, b).is_none())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for l in (2..=level).rev() {
            let mut below = BTreeSet::new();
            for &(a, b) in &demand[l] {
                let verts: Vec<VertexId> = self.members(l, a).chain(self.members(l, b)).collect();
                for (i, &x) in verts.iter().enumerate() {
                    for &y in &verts[i + 1..] {
                        if let Some((p, q)) = self.canonical(l - 1, x, y) {
                            if self.cache.get(l - 1, p, q).is_none() {
                                below.insert((p, q));
                            }
                        }
                    }
                }
            }
            demand[l - 1] = below.into_iter().collect();
        }
        for (l, pairs) in demand.iter().enumerate().skip(1) {
            for &(a, b) in pairs {
                if self.cache.get(l, a, b).is_some() {
                    continue;
                }
                let v = self.evaluate(l, a, b)?;
                self.cache.insert(l, a, b, v);
            }
        }
        Ok(())
    }

    /// One FLG evaluation between the level-`level` neighborhoods of `a` and
    /// `b`, assuming all level-`level − 1` values it needs are cached.
    fn evaluate(&self, level: usize, a: VertexId, b: VertexId) -> Result<f64> {
        let n = self.cache.evaluations.fetch_add(1, Ordering::Relaxed) + 1;
        if n > self.params.budget {
            return Err(Error::BudgetExceeded {
                level,
                budget: self.params.budget,
            });
        }
        let verts: Vec<VertexId> = self.members(level, a).chain(self.members(level, b)).collect();
        let joint = self.joint_gram(level - 1, &verts);
        flg_from_joint_gram(
            &self.factors[a.graph][a.vertex][level - 1],
            &self.factors[b.graph][b.vertex][level - 1],
            &joint,
            &self.params.flg,
        )
    }

    fn joint_gram(&self, level: usize, verts: &[VertexId]) -> DMatrix<f64> {
        let n = verts.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = if i == j && level > 0 {
                    1.0
                } else {
                    self.value(level, verts[i], verts[j])
                };
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// `𝔎_level(a, b)`.
    pub fn mls_kernel(&self, level: usize, a: VertexId, b: VertexId) -> Result<f64> {
        if level == 0 || level > self.params.levels {
            return Err(Error::invalid(format!(
                "level {level} outside [1, {}]",
                self.params.levels
            )));
        }
        for v in [a, b] {
            if v.graph >= self.graphs.len() || v.vertex >= self.graphs[v.graph].vertex_count() {
                return Err(Error::invalid(format!("unknown vertex {v:?}")));
            }
        }
        self.ensure(level, [(a, b)])?;
        Ok(self.value(level, a, b))
    }

    /// MLG kernel between graphs `i` and `j` of the engine's collection.
    pub fn mlg_kernel(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.graphs.len() || j >= self.graphs.len() {
            return Err(Error::invalid("graph index out of range"));
        }
        let top = self.params.levels;
        let verts: Vec<VertexId> = (0..self.graphs[i].vertex_count())
            .map(|v| VertexId::new(i, v))
            .chain((0..self.graphs[j].vertex_count()).map(|v| VertexId::new(j, v)))
            .collect();
        let pairs: Vec<Pair> = verts
            .iter()
            .enumerate()
            .flat_map(|(k, &x)| verts[k + 1..].iter().map(move |&y| (x, y)))
            .collect();
        self.ensure(top, pairs)?;
        let joint = self.joint_gram(top, &verts);
        flg_from_joint_gram(&self.whole[i], &self.whole[j], &joint, &self.params.flg)
    }

    /// Full Gram matrix, pairs evaluated in parallel against the shared cache.
    pub fn gram(&self) -> Result<GramMatrix> {
        let m = self.graphs.len();
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
        let results: Vec<Result<f64>> = pairs.par_iter().map(|&(i, j)| self.mlg_kernel(i, j)).collect();
        let completed = results.iter().filter(|r| r.is_ok()).count();
        let mut matrix = DMatrix::zeros(m, m);
        for (&(i, j), r) in pairs.iter().zip(results) {
            match r {
                Ok(v) => {
                    matrix[(i, j)] = v;
                    matrix[(j, i)] = v;
                }
                Err(e) => {
                    log::error!("exact Gram aborted: {completed}/{} entries completed", pairs.len());
                    return Err(Error::GramAborted {
                        completed,
                        total: pairs.len(),
                        source: Box::new(e),
                    });
                }
            }
        }
        let mut gram = GramMatrix::new(matrix);
        let p = &self.params;
        gram.set_meta("mode", "exact");
        gram.set_meta("levels", p.levels);
        gram.set_meta("radius", p.radius);
        gram.set_meta("eta", p.flg.eta);
        gram.set_meta("gamma", p.flg.gamma);
        gram.set_meta("tau", p.flg.tau);
        gram.set_meta("dedup", p.dedup);
        gram.set_meta("graphs", m);
        Ok(gram)
    }
}

/// MLG kernel between two standalone graphs.
pub fn mlg_kernel(g1: &Graph, g2: &Graph, params: &MlsParams) -> Result<f64> {
    let graphs = [g1.clone(), g2.clone()];
    ExactEngine::new(&graphs, *params)?.mlg_kernel(0, 1)
}

pub fn gram_exact(graphs: &[Graph], params: &MlsParams) -> Result<GramMatrix> {
    if graphs.is_empty() {
        return Err(Error::invalid("Gram matrix of an empty dataset"));
    }
    ExactEngine::new(graphs, *params)?.gram()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(labels: &[usize], width: usize) -> DMatrix<f64> {
        DMatrix::from_fn(labels.len(), width, |i, j| if labels[i] == j { 1.0 } else { 0.0 })
    }

    fn path(n: usize) -> Graph {
        let pairs: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_pairs(n, &pairs).unwrap()
    }

    fn degree_labeled(g: Graph) -> Graph {
        let labels: Vec<usize> = (0..g.vertex_count()).map(|v| g.degree(v)).collect();
        let f = one_hot(&labels, 4);
        g.with_features(f).unwrap()
    }

    #[test]
    fn same_vertex_is_one() {
        let graphs = [degree_labeled(path(5))];
        let engine = ExactEngine::new(&graphs, MlsParams::default()).unwrap();
        for level in 1..=2 {
            let v = VertexId::new(0, 2);
            assert_eq!(engine.mls_kernel(level, v, v).unwrap(), 1.0);
        }
    }

    #[test]
    fn path_end_vertices_agree_at_level_one() {
        let graphs = [degree_labeled(path(5))];
        let params = MlsParams {
            dedup: false,
            ..MlsParams::default()
        };
        let engine = ExactEngine::new(&graphs, params).unwrap();
        let k = engine.mls_kernel(1, VertexId::new(0, 0), VertexId::new(0, 4)).unwrap();
        assert!((k - 1.0).abs() < 1e-10, "{k}");
    }

    #[test]
    fn dedup_collapses_path_ends() {
        let graphs = [degree_labeled(path(5))];
        let engine = ExactEngine::new(&graphs, MlsParams::default()).unwrap();
        assert_eq!(
            engine.representative(1, VertexId::new(0, 4)),
            engine.representative(1, VertexId::new(0, 0))
        );
        assert_ne!(
            engine.representative(1, VertexId::new(0, 1)),
            engine.representative(1, VertexId::new(0, 0))
        );
    }

    #[test]
    fn budget_is_enforced() {
        let graphs = [degree_labeled(path(6)), degree_labeled(path(5))];
        let params = MlsParams {
            budget: 3,
            dedup: false,
            ..MlsParams::default()
        };
        let err = gram_exact(&graphs, &params).unwrap_err();
        match err {
            Error::GramAborted { source, .. } => {
                assert!(matches!(*source, Error::BudgetExceeded { budget: 3, .. }))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_features_and_bad_levels() {
        let graphs = [path(3)];
        assert!(ExactEngine::new(&graphs, MlsParams::default()).is_err());
        let graphs = [degree_labeled(path(3))];
        let engine = ExactEngine::new(&graphs, MlsParams::default()).unwrap();
        let v = VertexId::new(0, 0);
        assert!(engine.mls_kernel(0, v, v).is_err());
        assert!(engine.mls_kernel(3, v, v).is_err());
    }

    #[test]
    fn single_graph_gram_is_one() {
        let graphs = [degree_labeled(path(4))];
        let g = gram_exact(&graphs, &MlsParams::default()).unwrap();
        assert_eq!(g.size(), 1);
        assert!((g.matrix[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cache_insert_once() {
        let cache = KernelCache::default();
        let (a, b) = (VertexId::new(0, 1), VertexId::new(1, 0));
        assert_eq!(cache.insert(1, a, b, 0.5), 0.5);
        assert_eq!(cache.insert(1, b, a, 0.7), 0.5);
        assert_eq!(cache.get(1, b, a), Some(0.5));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn fingerprint_is_reordering_invariant() {
        let g = Graph::from_pairs(4, &[(0, 1), (1, 2), (1, 3)]).unwrap();
        let labels = vec![vec![1], vec![2], vec![1], vec![3]];
        let perm = [3, 0, 2, 1];
        let pg = g.permuted(&perm).unwrap();
        let mut plabels = vec![Vec::new(); 4];
        for v in 0..4 {
            plabels[perm[v]] = labels[v].clone();
        }
        assert_eq!(SubgraphFingerprint::new(&g, labels), SubgraphFingerprint::new(&pg, plabels));
    }
}
