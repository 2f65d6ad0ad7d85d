//! Dense symmetric linear algebra for (possibly singular) covariance
//! matrices: eigendecomposition with a declared numerical rank, the
//! pseudo-determinant, the Moore-Penrose inverse and the PSD square root.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative cutoff below which an eigenvalue counts as zero:
/// `λ ≤ RANK_CUTOFF · max(|λ_max|, 1)`.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Relative tolerance used when validating symmetry.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// A dense real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps `m` after checking that it is square and symmetric to within
    /// [`SYMMETRY_TOLERANCE`] relative to its largest entry. The stored matrix
    /// is the exact symmetrization `(m + mᵗ)/2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if worst > SYMMETRY_TOLERANCE * scale {
            return Err(Error::NotSymmetric(worst));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self { inner: sym })
    }

    /// Builds a symmetric matrix from the upper triangle of `f`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self { inner: m }
    }

    pub fn identity(dim: usize) -> Self {
        Self { inner: DMatrix::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { inner: DMatrix::zeros(dim, dim) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self { inner: DMatrix::from_diagonal(&DVector::from_column_slice(diag)) }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.inner.amax()
    }

    /// `A v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim(), "vector length must match matrix dimension");
        let n = self.dim();
        let mut out = vec![0.0; n];
        // column-major storage: accumulate column by column
        for (j, &vj) in v.iter().enumerate() {
            if vj == 0.0 {
                continue;
            }
            let col = self.inner.column(j);
            for (o, c) in out.iter_mut().zip(col.iter()) {
                *o += c * vj;
            }
        }
        out
    }

    /// `uᵗ A v`, see also [`quadratic_form`].
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let av = self.mul_vec(v);
        u.iter().zip(&av).map(|(a, b)| a * b).sum()
    }
}

/// Eigen-structure of a symmetric matrix, eigenvalues sorted in descending
/// order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenFactorization {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: DMatrix<f64>,
    /// Number of eigenvalues above the rank cutoff.
    pub rank: usize,
    /// The absolute threshold that defined `rank`.
    pub threshold: f64,
}

impl EigenFactorization {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Largest eigenvalue, or 0 for an empty matrix.
    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// Smallest eigenvalue, or 0 for an empty matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// Whether eigenvalue `idx` lies outside the zero band.
    pub fn is_nonzero(&self, idx: usize) -> bool {
        self.eigenvalues[idx].abs() > self.threshold
    }

    /// Eigenvalues outside the zero band, in descending order. For a PSD
    /// matrix these are the first `rank` eigenvalues.
    pub fn nonzero_eigenvalues(&self) -> Vec<f64> {
        (0..self.dim()).filter(|&i| self.is_nonzero(i)).map(|i| self.eigenvalues[i]).collect()
    }

    /// Rebuilds `Σ g(λ_i) q_i q_iᵗ` over the eigenpairs outside the zero band
    /// (or over all of them when `all` is set).
    fn spectral_map(&self, all: bool, g: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.dim();
        let mut out = DMatrix::<f64>::zeros(n, n);
        for idx in 0..n {
            if !all && !self.is_nonzero(idx) {
                continue;
            }
            let w = g(self.eigenvalues[idx]);
            if w == 0.0 {
                continue;
            }
            let q = self.eigenvectors.column(idx);
            out.ger(w, &q, &q, 1.0);
        }
        SymMatrix { inner: (&out + out.transpose()) * 0.5 }
    }

    /// `Q Λ Qᵗ` reassembled from the factorization.
    pub fn reconstruct(&self) -> SymMatrix {
        self.spectral_map(true, |l| l)
    }

    /// Orthogonal projector onto the span of the eigenvectors with nonzero
    /// eigenvalues.
    pub fn range_projector(&self) -> SymMatrix {
        self.spectral_map(false, |_| 1.0)
    }

    /// Norm of the component of `v` orthogonal to the range.
    pub fn null_space_norm(&self, v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        let mut proj = DVector::zeros(v.len());
        for idx in (0..self.dim()).filter(|&i| self.is_nonzero(i)) {
            let q = self.eigenvectors.column(idx);
            proj.axpy(q.dot(&v), &q, 1.0);
        }
        (v - proj).norm()
    }

    /// Squared norm of the projection of `v` onto the range, `‖Q_r v‖²`.
    pub fn range_norm_squared(&self, v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        (0..self.dim())
            .filter(|&i| self.is_nonzero(i))
            .map(|idx| {
                let c = self.eigenvectors.column(idx).dot(&v);
                c * c
            })
            .sum()
    }
}

/// Symmetric eigendecomposition. The numerical rank counts eigenvalues whose
/// magnitude is strictly above `rank_cutoff · max(|λ|_max, 1)`.
pub fn eigen(a: &SymMatrix, rank_cutoff: f64) -> EigenFactorization {
    let n = a.dim();
    if n == 0 {
        return EigenFactorization {
            eigenvalues: Vec::new(),
            eigenvectors: DMatrix::zeros(0, 0),
            rank: 0,
            threshold: rank_cutoff,
        };
    }
    let se = SymmetricEigen::new(a.inner.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[j].total_cmp(&se.eigenvalues[i]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &se.eigenvectors.column(src));
    }
    let spectral_scale = eigenvalues
        .iter()
        .fold(0.0f64, |m, l| m.max(l.abs()))
        .max(1.0);
    let threshold = rank_cutoff * spectral_scale;
    let rank = eigenvalues.iter().filter(|&&l| l.abs() > threshold).count();
    EigenFactorization { eigenvalues, eigenvectors, rank, threshold }
}

/// Like [`eigen`] but rejects a matrix given as a raw [`DMatrix`] that is not
/// symmetric.
pub fn eigen_checked(m: DMatrix<f64>, rank_cutoff: f64) -> Result<EigenFactorization> {
    Ok(eigen(&SymMatrix::new(m)?, rank_cutoff))
}

/// Product of the eigenvalues outside the zero band; `1` for the zero matrix.
pub fn pseudo_determinant(a: &SymMatrix) -> f64 {
    pseudo_determinant_of(&eigen(a, RANK_CUTOFF))
}

pub fn pseudo_determinant_of(f: &EigenFactorization) -> f64 {
    f.nonzero_eigenvalues().iter().product()
}

/// `log det* A`, which stays finite where the product would overflow.
pub fn log_pseudo_determinant_of(f: &EigenFactorization) -> f64 {
    f.nonzero_eigenvalues().iter().map(|l| l.ln()).sum()
}

/// Moore-Penrose inverse `P_r D_r⁻¹ P_rᵗ` of a symmetric matrix.
pub fn moore_penrose(a: &SymMatrix) -> SymMatrix {
    moore_penrose_of(&eigen(a, RANK_CUTOFF))
}

pub fn moore_penrose_of(f: &EigenFactorization) -> SymMatrix {
    f.spectral_map(false, |l| 1.0 / l)
}

/// The unique PSD `B` with `BᵗB = A`. Eigenvalues within the rank cutoff of
/// zero (on either side) are clamped to zero; anything more negative is an
/// error.
pub fn sqrt_psd(a: &SymMatrix) -> Result<SymMatrix> {
    sqrt_psd_of(&eigen(a, RANK_CUTOFF))
}

pub fn sqrt_psd_of(f: &EigenFactorization) -> Result<SymMatrix> {
    check_psd(f)?;
    Ok(f.spectral_map(false, |l| l.max(0.0).sqrt()))
}

/// Fails when the most negative eigenvalue is below `-threshold`.
pub fn check_psd(f: &EigenFactorization) -> Result<()> {
    let min = f.min_eigenvalue();
    if min < -f.threshold {
        return Err(Error::NotPositiveSemiDefinite(min));
    }
    Ok(())
}

/// `uᵗ A v`.
pub fn quadratic_form(u: &[f64], a: &SymMatrix, v: &[f64]) -> Result<f64> {
    if u.len() != a.dim() || v.len() != a.dim() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {} against a {}x{} matrix",
            u.len(),
            v.len(),
            a.dim(),
            a.dim()
        )));
    }
    Ok(a.bilinear(u, v))
}

/// Maximum deviation from each of the four Penrose conditions
/// `A A⁺ A = A`, `A⁺ A A⁺ = A⁺`, `(A A⁺)ᵗ = A A⁺`, `(A⁺ A)ᵗ = A⁺ A`.
pub fn penrose_residuals(a: &DMatrix<f64>, a_plus: &DMatrix<f64>) -> [f64; 4] {
    let aap = a * a_plus;
    let apa = a_plus * a;
    [
        (&aap * a - a).amax(),
        (&apa * a_plus - a_plus).amax(),
        (aap.transpose() - &aap).amax(),
        (apa.transpose() - &apa).amax(),
    ]
}
