//! Feature-space Laplacian graph (FLG) kernel.
//!
//! Each graph defines a zero-mean Gaussian over vertex variables with
//! covariance `L⁻¹` (`L` the regularized Laplacian). Pushing that Gaussian
//! through a vertex feature map `U` gives a covariance `U L⁻¹ Uᵀ` over
//! feature space; the kernel is the Bhattacharyya overlap of the two
//! `γ`-softened feature-space Gaussians.
//!
//! The kernel only depends on inner products between vertex features, so it
//! can be induced from any PSD base kernel: eigendecompose the joint Gram
//! matrix of both graphs' vertices, use the rows of `Q = U_K Λ^{1/2}` as
//! coordinates in an orthonormal basis of the span, and project.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{laplacian, Graph, RegularizedLaplacian};
use crate::spd::{self, bhattacharyya_ratio, sym_eig, Cholesky, SMatrix, SymEig};

/// Relative tolerance on negative joint-Gram eigenvalues.
pub const PSD_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlgParams {
    /// Laplacian regularizer.
    pub eta: f64,
    /// Covariance softening added to every S matrix.
    pub gamma: f64,
    /// Relative eigenvalue cutoff for the joint basis.
    pub tau: f64,
}

impl FlgParams {
    pub fn new(eta: f64, gamma: f64) -> Self {
        FlgParams {
            eta,
            gamma,
            tau: spd::DEFAULT_TAU,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::invalid(format!("tau must be non-negative, got {}", self.tau)));
        }
        Ok(())
    }
}

/// `m × n` matrix whose column `j` holds the features of vertex `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix(DMatrix<f64>);

impl FeatureMatrix {
    pub fn new(u: DMatrix<f64>) -> Self {
        FeatureMatrix(u)
    }

    /// From an `n × m` matrix with one row per vertex.
    pub fn from_vertex_rows(rows: &DMatrix<f64>) -> Self {
        FeatureMatrix(rows.transpose())
    }

    pub fn of_graph(g: &Graph) -> Result<Self> {
        g.features()
            .map(FeatureMatrix::from_vertex_rows)
            .ok_or_else(|| Error::invalid("graph has no vertex features"))
    }

    pub fn feature_dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn vertex_count(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Symmetric PSD kernel between vertex payloads.
pub trait BaseKernel<V>: Sync {
    fn eval(&self, a: &V, b: &V) -> f64;
}

impl<V, F> BaseKernel<V> for F
where
    F: Fn(&V, &V) -> f64 + Sync,
{
    fn eval(&self, a: &V, b: &V) -> f64 {
        self(a, b)
    }
}

/// `κ(v, v′) = φ(v) · φ(v′)` over explicit feature vectors.
#[derive(Clone, Copy, Debug, Default)]
pub struct DotProduct;

impl BaseKernel<DVector<f64>> for DotProduct {
    fn eval(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(b)
    }
}

/// `Cᵀ L⁻¹ C + γI` where `C` (`n × p`) holds per-vertex coordinates. `L⁻¹`
/// is applied through the factorization, never formed.
pub fn s_matrix_from_coords(factor: &Cholesky, coords: &DMatrix<f64>, gamma: f64) -> Result<SMatrix> {
    if factor.dim() != coords.nrows() {
        return Err(Error::DimensionMismatch {
            what: "Laplacian size vs coordinate rows",
            left: factor.dim(),
            right: coords.nrows(),
        });
    }
    let x = factor.solve(coords);
    let mut s = coords.transpose() * x;
    for i in 0..s.nrows() {
        s[(i, i)] += gamma;
    }
    SMatrix::new(spd::symmetrize(s), gamma)
}

/// `U L⁻¹ Uᵀ + γI` for explicit features.
pub fn s_matrix_explicit(
    g: &Graph,
    u: &FeatureMatrix,
    l: &RegularizedLaplacian,
    gamma: f64,
) -> Result<SMatrix> {
    if u.vertex_count() != g.vertex_count() || l.matrix.nrows() != g.vertex_count() {
        return Err(Error::DimensionMismatch {
            what: "feature columns vs vertex count",
            left: u.vertex_count(),
            right: g.vertex_count(),
        });
    }
    s_matrix_from_coords(&l.factor()?, &u.as_matrix().transpose(), gamma)
}

/// FLG kernel from explicit feature matrices sharing a feature dimension.
pub fn flg_explicit(
    g1: &Graph,
    u1: &FeatureMatrix,
    g2: &Graph,
    u2: &FeatureMatrix,
    params: &FlgParams,
) -> Result<f64> {
    params.validate()?;
    if u1.feature_dim() != u2.feature_dim() {
        return Err(Error::DimensionMismatch {
            what: "feature dimension",
            left: u1.feature_dim(),
            right: u2.feature_dim(),
        });
    }
    let s1 = s_matrix_explicit(g1, u1, &laplacian(g1, params.eta)?, params.gamma)?;
    let s2 = s_matrix_explicit(g2, u2, &laplacian(g2, params.eta)?, params.gamma)?;
    bhattacharyya_ratio(&s1, &s2)
}

/// Orthonormal basis of the span of a set of vertices' feature images,
/// expressed through per-vertex coordinates `Q` (`N × p`, `K ≈ Q Qᵀ`).
#[derive(Clone, Debug)]
pub struct JointBasis {
    pub eig: SymEig,
    pub q: DMatrix<f64>,
}

pub fn joint_basis<V>(vertices: &[V], kappa: &impl BaseKernel<V>, tau: f64) -> Result<JointBasis> {
    joint_basis_from_gram(&gram_of(vertices, kappa), tau)
}

pub fn gram_of<V>(vertices: &[V], kappa: &impl BaseKernel<V>) -> DMatrix<f64> {
    let n = vertices.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kappa.eval(&vertices[i], &vertices[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

pub fn joint_basis_from_gram(k: &DMatrix<f64>, tau: f64) -> Result<JointBasis> {
    if k.nrows() == 0 {
        return Err(Error::invalid("joint basis over an empty vertex set"));
    }
    let eig = sym_eig(k, tau)?;
    check_psd(eig.min_eigenvalue, eig.max_eigenvalue)?;
    let mut q = eig.vectors.clone();
    for (c, lambda) in eig.values.iter().enumerate() {
        let s = lambda.sqrt();
        q.column_mut(c).scale_mut(s);
    }
    Ok(JointBasis { eig, q })
}

pub(crate) fn check_psd(min_eig: f64, max_eig: f64) -> Result<()> {
    if min_eig < -PSD_TOL * max_eig.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::BaseKernelViolation { min_eig, max_eig });
    }
    Ok(())
}

/// FLG kernel given both graphs' Laplacian factors and the joint Gram
/// matrix over their concatenated vertices (first `l1.dim()` rows belong to
/// the first graph).
pub fn flg_from_joint_gram(l1: &Cholesky, l2: &Cholesky, joint: &DMatrix<f64>, params: &FlgParams) -> Result<f64> {
    let (n1, n2) = (l1.dim(), l2.dim());
    if joint.nrows() != n1 + n2 {
        return Err(Error::DimensionMismatch {
            what: "joint Gram size vs n1 + n2",
            left: joint.nrows(),
            right: n1 + n2,
        });
    }
    let basis = joint_basis_from_gram(joint, params.tau)?;
    let q1 = basis.q.rows(0, n1).into_owned();
    let q2 = basis.q.rows(n1, n2).into_owned();
    let s1 = s_matrix_from_coords(l1, &q1, params.gamma)?;
    let s2 = s_matrix_from_coords(l2, &q2, params.gamma)?;
    bhattacharyya_ratio(&s1, &s2)
}

/// FLG kernel induced from a base kernel over vertex payloads
/// (`p1[i]` belongs to vertex `i` of `g1`, likewise for `g2`).
pub fn flg_kernelized<V>(
    g1: &Graph,
    p1: &[V],
    g2: &Graph,
    p2: &[V],
    kappa: &impl BaseKernel<V>,
    params: &FlgParams,
) -> Result<f64>
where
    V: Clone,
{
    params.validate()?;
    if p1.len() != g1.vertex_count() || p2.len() != g2.vertex_count() {
        return Err(Error::DimensionMismatch {
            what: "payload count vs vertex count",
            left: p1.len() + p2.len(),
            right: g1.vertex_count() + g2.vertex_count(),
        });
    }
    let joined: Vec<V> = p1.iter().chain(p2).cloned().collect();
    let joint = gram_of(&joined, kappa);
    let l1 = laplacian(g1, params.eta)?.factor()?;
    let l2 = laplacian(g2, params.eta)?.factor()?;
    flg_from_joint_gram(&l1, &l2, &joint, params)
}

/// Feature rows of a graph as individual vectors, for use with [`DotProduct`].
pub fn feature_payloads(g: &Graph) -> Result<Vec<DVector<f64>>> {
    let f = g.features().ok_or_else(|| Error::invalid("graph has no vertex features"))?;
    Ok((0..f.nrows()).map(|i| f.row(i).transpose()).collect())
}
