//! Dense symmetric positive-definite kernels: Cholesky with a single jitter
//! retry, log-determinants, thresholded eigendecomposition and the
//! Bhattacharyya overlap between zero-mean Gaussians.
//!
//! Determinants are only ever handled in log space.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Default eigenvalue cutoff, relative to the largest eigenvalue.
pub const DEFAULT_TAU: f64 = 1e-8;

const SYMMETRY_TOL: f64 = 1e-10;

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    lower: DMatrix<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factors a symmetric matrix (only the lower triangle is read). On
    /// breakdown, `1e-12·trace/p` is added to the diagonal once and the
    /// factorization retried.
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                what: "Cholesky of a non-square matrix",
                left: a.nrows(),
                right: a.ncols(),
            });
        }
        match factor(a) {
            Ok(lower) => Ok(Cholesky { lower, jitter: 0.0 }),
            Err(pivot) => {
                let p = a.nrows().max(1) as f64;
                let jitter = 1e-12 * a.trace().abs() / p;
                if !(jitter > 0.0) {
                    return Err(Error::Singular { pivot });
                }
                log::warn!("Cholesky failed at pivot {pivot}; retrying with jitter {jitter:e}");
                let mut shifted = a.clone();
                for i in 0..a.nrows() {
                    shifted[(i, i)] += jitter;
                }
                factor(&shifted)
                    .map(|lower| Cholesky { lower, jitter })
                    .map_err(|pivot| Error::Singular { pivot })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Diagonal shift applied by the retry, zero if none was needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.lower.solve_lower_triangular_unchecked_mut(&mut x);
        self.lower.tr_solve_lower_triangular_unchecked_mut(&mut x);
        x
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.solve(&DMatrix::identity(self.dim(), self.dim()));
        symmetrize(inv)
    }
}

fn factor(a: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, usize> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(j);
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    m
}

/// Largest `|a_ij − a_ji|` relative to `max(1, max |a_ij|)`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let scale = m.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Symmetric positive-definite matrix `Qᵀ L⁻¹ Q + γI` with its factorization.
#[derive(Clone, Debug)]
pub struct SMatrix {
    matrix: DMatrix<f64>,
    gamma: f64,
    chol: Cholesky,
}

impl SMatrix {
    pub fn new(matrix: DMatrix<f64>, gamma: f64) -> Result<Self> {
        let asym = asymmetry(&matrix);
        if asym > SYMMETRY_TOL {
            return Err(Error::invalid(format!(
                "S matrix is not symmetric (relative asymmetry {asym:e})"
            )));
        }
        let chol = Cholesky::new(&matrix)?;
        Ok(SMatrix { matrix, gamma, chol })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn log_det(&self) -> f64 {
        self.chol.log_det()
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }
}

pub fn spd_logdet_and_inverse(s: &SMatrix) -> (f64, DMatrix<f64>) {
    (s.log_det(), s.chol.inverse())
}

/// Overlap `∫ √p₁ √p₂` of `N(0, S₁)` and `N(0, S₂)`.
///
/// Evaluated as `exp(¼ log|S₁| + ¼ log|S₂| − ½ log|(S₁+S₂)/2|)`, which equals
/// `|(½S₁⁻¹+½S₂⁻¹)⁻¹|^{1/2} / (|S₁|^{1/4} |S₂|^{1/4})` without forming any
/// inverse. The result lies in (0, 1].
pub fn bhattacharyya_ratio(s1: &SMatrix, s2: &SMatrix) -> Result<f64> {
    Ok(log_bhattacharyya(s1, s2)?.exp())
}

pub fn log_bhattacharyya(s1: &SMatrix, s2: &SMatrix) -> Result<f64> {
    if s1.dim() != s2.dim() {
        return Err(Error::DimensionMismatch {
            what: "S matrix dimensions",
            left: s1.dim(),
            right: s2.dim(),
        });
    }
    if s1.dim() == 0 {
        return Ok(0.0);
    }
    let avg = (&s1.matrix + &s2.matrix) * 0.5;
    let avg_logdet = Cholesky::new(&avg)?.log_det();
    Ok(0.25 * (s1.log_det() + s2.log_det()) - 0.5 * avg_logdet)
}

/// Eigenpairs of a symmetric matrix above a relative cutoff, descending.
#[derive(Clone, Debug)]
pub struct SymEig {
    /// Retained eigenvalues, descending, all `> tau · λ_max`.
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors as columns, matching `values`.
    pub vectors: DMatrix<f64>,
    pub tau: f64,
    /// Extremes of the full spectrum, before thresholding.
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl SymEig {
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// Keeps only the leading `p` eigenpairs.
    pub fn truncate(&mut self, p: usize) {
        if p < self.rank() {
            self.values = self.values.rows(0, p).into_owned();
            self.vectors = self.vectors.columns(0, p).into_owned();
        }
    }
}

/// Eigendecomposition keeping eigenvalues `λ > tau · λ_max`. Each
/// eigenvector's largest-magnitude entry is made positive so results are
/// reproducible.
pub fn sym_eig(k: &DMatrix<f64>, tau: f64) -> Result<SymEig> {
    if !k.is_square() {
        return Err(Error::DimensionMismatch {
            what: "eigendecomposition of a non-square matrix",
            left: k.nrows(),
            right: k.ncols(),
        });
    }
    let asym = asymmetry(k);
    if asym > 1e-9 {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (relative asymmetry {asym:e})"
        )));
    }
    let n = k.nrows();
    if n == 0 {
        return Ok(SymEig {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
            tau,
            min_eigenvalue: 0.0,
            max_eigenvalue: 0.0,
        });
    }
    let eig = SymmetricEigen::new(symmetrize(k.clone()));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let max_eigenvalue = eig.eigenvalues[order[0]];
    let min_eigenvalue = eig.eigenvalues[order[n - 1]];
    let cutoff = tau * max_eigenvalue.max(0.0);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > cutoff && eig.eigenvalues[i] > 0.0)
        .collect();
    let values = DVector::from_iterator(kept.len(), kept.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, kept.len());
    for (c, &i) in kept.iter().enumerate() {
        let col = eig.eigenvectors.column(i);
        let lead = (0..n).fold(0, |best, r| if col[r].abs() > col[best].abs() { r } else { best });
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(c, &(col * sign));
    }
    Ok(SymEig {
        values,
        vectors,
        tau,
        min_eigenvalue,
        max_eigenvalue,
    })
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn spectrum_extremes(k: &DMatrix<f64>) -> (f64, f64) {
    if k.nrows() == 0 {
        return (0.0, 0.0);
    }
    let ev = SymmetricEigen::new(symmetrize(k.clone())).eigenvalues;
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(m: &[f64], n: usize) -> SMatrix {
        SMatrix::new(DMatrix::from_row_slice(n, n, m), 0.0).unwrap()
    }

    #[test]
    fn logdet_and_inverse_of_scaled_identity() {
        let s = spd(&[2.0, 0.0, 0.0, 2.0], 2);
        let (ld, inv) = spd_logdet_and_inverse(&s);
        assert!((ld - 2.0 * 2f64.ln()).abs() < 1e-14);
        assert!((inv - DMatrix::identity(2, 2) * 0.5).abs().max() < 1e-14);
    }

    #[test]
    fn logdet_and_inverse_hand_computed() {
        let s = spd(&[2.0, 1.0, 1.0, 2.0], 2);
        let (ld, inv) = spd_logdet_and_inverse(&s);
        assert!((ld - 3f64.ln()).abs() < 1e-14);
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]) / 3.0;
        assert!((inv - expected).abs().max() < 1e-14);
    }

    #[test]
    fn singular_reports_pivot() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0]);
        match Cholesky::new(&m) {
            Err(Error::Singular { pivot }) => assert_eq!(pivot, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        // rank one, so the second pivot is exactly zero
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let c = Cholesky::new(&m).unwrap();
        assert!(c.jitter() > 0.0);
    }

    #[test]
    fn ratio_of_identical_is_one() {
        let s = spd(&[3.0, 0.5, 0.5, 1.0], 2);
        assert_eq!(bhattacharyya_ratio(&s, &s).unwrap(), 1.0);
        let a = spd(&[7.0, 0.0, 0.0, 7.0], 2);
        assert!((bhattacharyya_ratio(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_one_dimensional() {
        // variances 4 and 1: sqrt(2·4·1/(4+1)) / (4·1)^{1/4} = sqrt(0.8)
        let r = bhattacharyya_ratio(&spd(&[4.0], 1), &spd(&[1.0], 1)).unwrap();
        assert!((r - 0.8f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn ratio_dimension_mismatch() {
        let r = bhattacharyya_ratio(&spd(&[1.0], 1), &spd(&[1.0, 0.0, 0.0, 1.0], 2));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn smatrix_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(SMatrix::new(m, 0.0).is_err());
    }

    #[test]
    fn eig_identity_and_threshold() {
        let e = sym_eig(&DMatrix::identity(3, 3), DEFAULT_TAU).unwrap();
        assert_eq!(e.rank(), 3);
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));

        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1e-12]));
        let e = sym_eig(&k, DEFAULT_TAU).unwrap();
        assert_eq!(e.rank(), 1);
        assert!((e.values[0] - 2.0).abs() < 1e-14);
        assert!((e.vectors[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(sym_eig(&k, DEFAULT_TAU).is_err());
    }

    #[test]
    fn eig_descending_with_sign_convention() {
        let k = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let e = sym_eig(&k, DEFAULT_TAU).unwrap();
        assert!(e.values[0] >= e.values[1] && e.values[1] >= e.values[2]);
        for c in 0..3 {
            let col = e.vectors.column(c);
            let lead = col.iter().cloned().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(lead > 0.0);
        }
    }
}
