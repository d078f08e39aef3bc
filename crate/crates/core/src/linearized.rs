//! Linearized MLG kernel: level-by-level projection onto a sampled basis.
//!
//! At each level `ℓ` every vertex `v` gets an S matrix built from its
//! level-`ℓ` neighborhood and the previous level's explicit feature rows.
//! `Ñ` vertices are sampled uniformly, their pairwise kernel matrix `K̃` is
//! eigendecomposed and truncated to rank `P̃`, and every vertex is projected
//! onto the retained eigenvectors:
//!
//! `Q̃[v, i] = λ_i^{-1/2} Σ_j u_i[j] κ_ℓ(v, ṽ_j)`.
//!
//! Those rows become the explicit features of level `ℓ + 1`. The graph
//! level kernel is the FLG kernel between whole graphs using the level-`L`
//! rows as explicit features. Every S matrix has the same small dimension,
//! so each Gram entry costs one `P̃ × P̃` factorization.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::VertexId;
use crate::flg::{check_psd, s_matrix_from_coords, FlgParams};
use crate::gram::GramMatrix;
use crate::graph::{build_neighborhood_stack, laplacian, Graph, NeighborhoodStack};
use crate::spd::{bhattacharyya_ratio, sym_eig, SMatrix, DEFAULT_TAU};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineParams {
    pub levels: usize,
    pub radius: usize,
    pub eta: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Sampled vertices per level (`Ñ`).
    pub samples: usize,
    /// Target rank (`P̃`).
    pub rank: usize,
    pub seed: u64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            levels: 2,
            radius: 1,
            eta: 0.1,
            gamma: 0.1,
            tau: DEFAULT_TAU,
            samples: 100,
            rank: 10,
            seed: 0,
        }
    }
}

impl PipelineParams {
    pub fn flg(&self) -> FlgParams {
        FlgParams {
            eta: self.eta,
            gamma: self.gamma,
            tau: self.tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::invalid("levels must be at least 1"));
        }
        if self.radius == 0 {
            return Err(Error::invalid("radius must be at least 1"));
        }
        if self.rank == 0 || self.samples < self.rank {
            return Err(Error::invalid(format!(
                "need samples >= rank >= 1, got samples={} rank={}",
                self.samples, self.rank
            )));
        }
        self.flg().validate()
    }
}

/// Every vertex of the dataset in graph-major order.
pub fn all_vertices(graphs: &[Graph]) -> Vec<VertexId> {
    graphs
        .iter()
        .enumerate()
        .flat_map(|(g, graph)| (0..graph.vertex_count()).map(move |v| VertexId::new(g, v)))
        .collect()
}

/// `n_samples` distinct vertices drawn uniformly without replacement from
/// the concatenated vertex set, in graph-major order. `stream` selects an
/// independent random stream for the same seed.
pub fn sample_vertices(graphs: &[Graph], n_samples: usize, seed: u64, stream: u64) -> Result<Vec<VertexId>> {
    let pool = all_vertices(graphs);
    if n_samples > pool.len() {
        return Err(Error::SampleTooLarge {
            requested: n_samples,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut picked = index::sample(&mut rng, pool.len(), n_samples).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i]).collect())
}

#[derive(Clone, Debug)]
pub struct LinearizedLevel {
    pub level: usize,
    pub samples: Vec<VertexId>,
    /// `K̃`, the kernel among sampled vertices.
    pub sample_gram: DMatrix<f64>,
    /// Retained eigenvalues of `K̃`, descending.
    pub eigenvalues: DVector<f64>,
    /// Matching eigenvectors as columns (`Ñ × P̃`).
    pub eigenvectors: DMatrix<f64>,
    /// Per graph, `n_g × P̃` projected feature rows.
    pub features: Vec<DMatrix<f64>>,
    pub requested_rank: usize,
}

impl LinearizedLevel {
    pub fn effective_rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Frobenius norm of the part of `K̃`'s spectrum that was dropped.
    pub fn discarded_norm(&self) -> f64 {
        let total = self.sample_gram.norm_squared();
        let kept = self.eigenvalues.norm_squared();
        (total - kept).max(0.0).sqrt()
    }

    /// Projected rows of the sampled vertices, in sample order.
    pub fn sample_rows(&self) -> DMatrix<f64> {
        let p = self.effective_rank();
        DMatrix::from_fn(self.samples.len(), p, |r, c| {
            let v = self.samples[r];
            self.features[v.graph][(v.vertex, c)]
        })
    }
}

/// Level-`level` S matrix of every vertex, in [`all_vertices`] order.
fn vertex_s_matrices(
    graphs: &[Graph],
    stacks: &[NeighborhoodStack],
    level: usize,
    prev: &[DMatrix<f64>],
    params: &PipelineParams,
) -> Result<Vec<SMatrix>> {
    all_vertices(graphs)
        .par_iter()
        .map(|&v| {
            let sub = stacks[v.graph].subgraph(v.vertex, level);
            let coords = prev[v.graph].select_rows(&sub.parent);
            let factor = laplacian(&sub.graph, params.eta)?.factor()?;
            s_matrix_from_coords(&factor, &coords, params.gamma)
        })
        .collect()
}

/// One level of the pipeline. `prev[g]` holds the explicit features of
/// graph `g` from the level below (`n_g × d`, same `d` for all graphs).
pub fn linearize_level(
    level: usize,
    graphs: &[Graph],
    stacks: &[NeighborhoodStack],
    prev: &[DMatrix<f64>],
    params: &PipelineParams,
) -> Result<LinearizedLevel> {
    if prev.len() != graphs.len() || stacks.len() != graphs.len() {
        return Err(Error::DimensionMismatch {
            what: "per-graph inputs vs graph count",
            left: prev.len().min(stacks.len()),
            right: graphs.len(),
        });
    }
    let offsets: Vec<usize> = graphs
        .iter()
        .scan(0, |acc, g| {
            let start = *acc;
            *acc += g.vertex_count();
            Some(start)
        })
        .collect();
    let flat = |v: VertexId| offsets[v.graph] + v.vertex;

    let s = vertex_s_matrices(graphs, stacks, level, prev, params)?;
    let samples = sample_vertices(graphs, params.samples, params.seed, level as u64)?;
    let sample_idx: Vec<usize> = samples.iter().map(|&v| flat(v)).collect();
    let n_s = samples.len();

    // Kernel between every vertex and every sample; the sample rows of this
    // matrix are K̃ itself.
    let cross: Vec<Vec<f64>> = s
        .par_iter()
        .map(|sv| {
            sample_idx
                .iter()
                .map(|&j| bhattacharyya_ratio(sv, &s[j]))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let sample_gram = DMatrix::from_fn(n_s, n_s, |a, b| {
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        cross[sample_idx[x]][y]
    });

    let mut eig = sym_eig(&sample_gram, params.tau)?;
    check_psd(eig.min_eigenvalue, eig.max_eigenvalue)?;
    if eig.rank() < params.rank && params.rank < params.samples {
        log::warn!(
            "level {level}: sample kernel has rank {} < requested {}; shrinking",
            eig.rank(),
            params.rank
        );
    }
    eig.truncate(params.rank);
    let p = eig.rank();

    // W = U Λ^{-1/2}; every vertex's new row is its kernel row times W.
    let mut w = eig.vectors.clone();
    for (c, lambda) in eig.values.iter().enumerate() {
        w.column_mut(c).scale_mut(1.0 / lambda.sqrt());
    }
    let features = graphs
        .iter()
        .enumerate()
        .map(|(g, graph)| {
            let n = graph.vertex_count();
            let c = DMatrix::from_fn(n, n_s, |v, j| cross[offsets[g] + v][j]);
            let q = c * &w;
            debug_assert_eq!(q.ncols(), p);
            q
        })
        .collect();

    Ok(LinearizedLevel {
        level,
        samples,
        sample_gram,
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
        features,
        requested_rank: params.rank,
    })
}

fn base_features(graphs: &[Graph]) -> Result<Vec<DMatrix<f64>>> {
    let dim = graphs.first().and_then(|g| g.feature_dim());
    graphs
        .iter()
        .map(|g| match (g.features(), dim) {
            (Some(f), Some(d)) if f.ncols() == d => Ok(f.clone()),
            (Some(f), Some(d)) => Err(Error::DimensionMismatch {
                what: "vertex feature width",
                left: f.ncols(),
                right: d,
            }),
            _ => Err(Error::invalid(format!("graph {:?} has no vertex features", g.id()))),
        })
        .collect()
}

/// Runs levels `1..=L`; the last entry feeds the graph-level kernel.
pub fn linearize_all(graphs: &[Graph], params: &PipelineParams) -> Result<Vec<LinearizedLevel>> {
    params.validate()?;
    if graphs.is_empty() {
        return Err(Error::invalid("no graphs to linearize"));
    }
    let stacks = graphs
        .iter()
        .map(|g| build_neighborhood_stack(g, params.radius, params.levels))
        .collect::<Result<Vec<_>>>()?;
    let mut prev = base_features(graphs)?;
    let mut out = Vec::with_capacity(params.levels);
    for level in 1..=params.levels {
        let lin = linearize_level(level, graphs, &stacks, &prev, params)?;
        log::info!(
            "level {level}: {} samples, effective rank {}",
            lin.samples.len(),
            lin.effective_rank()
        );
        prev = lin.features.clone();
        out.push(lin);
    }
    Ok(out)
}

/// Whole-graph S matrix `Q̃_gᵀ L_g⁻¹ Q̃_g + γI` per graph.
pub fn s_matrices_per_graph(graphs: &[Graph], features: &[DMatrix<f64>], eta: f64, gamma: f64) -> Result<Vec<SMatrix>> {
    if features.len() != graphs.len() {
        return Err(Error::DimensionMismatch {
            what: "feature blocks vs graph count",
            left: features.len(),
            right: graphs.len(),
        });
    }
    graphs
        .par_iter()
        .zip(features)
        .map(|(g, q)| {
            let factor = laplacian(g, eta)?.factor()?;
            s_matrix_from_coords(&factor, q, gamma)
        })
        .collect()
}

/// Gram matrix of pairwise Bhattacharyya ratios between S matrices.
pub fn gram_from_s_matrices(s: &[SMatrix]) -> Result<DMatrix<f64>> {
    let m = s.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| bhattacharyya_ratio(&s[i], &s[j]))
        .collect::<Result<Vec<f64>>>()?;
    let mut k = DMatrix::zeros(m, m);
    for (&(i, j), v) in pairs.iter().zip(values) {
        k[(i, j)] = v;
        k[(j, i)] = v;
    }
    Ok(k)
}

pub fn gram_linearized(graphs: &[Graph], params: &PipelineParams) -> Result<GramMatrix> {
    let levels = linearize_all(graphs, params)?;
    let top = levels.last().expect("at least one level");
    let s = s_matrices_per_graph(graphs, &top.features, params.eta, params.gamma)?;
    let mut gram = GramMatrix::new(gram_from_s_matrices(&s)?);
    gram.set_meta("mode", "linearized");
    gram.set_meta("graphs", graphs.len());
    gram.set_meta("levels", params.levels);
    gram.set_meta("radius", params.radius);
    gram.set_meta("eta", params.eta);
    gram.set_meta("gamma", params.gamma);
    gram.set_meta("tau", params.tau);
    gram.set_meta("samples", params.samples);
    gram.set_meta("rank", params.rank);
    gram.set_meta("seed", params.seed);
    for lin in &levels {
        gram.set_meta(format!("level{}.effective_rank", lin.level), lin.effective_rank());
        let ids: Vec<String> = lin.samples.iter().map(|v| format!("{}:{}", v.graph, v.vertex)).collect();
        gram.set_meta(format!("level{}.samples", lin.level), ids.join(" "));
    }
    Ok(gram)
}
