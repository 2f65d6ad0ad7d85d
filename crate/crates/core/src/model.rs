//! The dependent Gaussian mixture model: signal matrices `A_x` built from a
//! label function `θ`, a covariance `Σ` over all `pn` observation entries,
//! and sampling of the noise `W` and observation `K_y = A_y + W`.
//!
//! Entry `(i, j)` of a `p × n` matrix (coordinate `i`, vertex `j`) flattens
//! to index `n·i + j` everywhere in the crate.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::assignment::CommunityAssignment;
use crate::error::{Error, Result};
use crate::linalg::{self, EigenFactorization, SymMatrix, RANK_CUTOFF};
use crate::rng::rng_from_seed;

/// Relative size of the null-space component of a residual above which an
/// observation is rejected by [`ModelSpec::log_density`].
pub const SUPPORT_TOLERANCE: f64 = 1e-6;

/// The label function `θ(x, i, a)`: the expected value of coordinate `i` for
/// a vertex carrying label `a` under assignment `x`. Labels are 0-based.
pub trait Theta: Send + Sync {
    fn value(&self, x: &CommunityAssignment, coord: usize, label: usize) -> f64;

    /// True when every relabeling of communities is θ-preserving, so that
    /// the equivalence class of `x` is exactly the set of assignments with
    /// the same partition.
    fn label_symmetric(&self) -> bool {
        false
    }
}

/// `θ(x, i, a) = [x(i) = a]`, hence `(A_x)_{i,j} = 1` when vertices `i`
/// and `j` share a community. Requires `p = n`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SameCommunityTheta;

impl Theta for SameCommunityTheta {
    fn value(&self, x: &CommunityAssignment, coord: usize, label: usize) -> f64 {
        if x.label(coord) == label {
            1.0
        } else {
            0.0
        }
    }

    fn label_symmetric(&self) -> bool {
        true
    }
}

/// `θ(x, i, a) = c`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantTheta(pub f64);

impl Theta for ConstantTheta {
    fn value(&self, _x: &CommunityAssignment, _coord: usize, _label: usize) -> f64 {
        self.0
    }

    fn label_symmetric(&self) -> bool {
        true
    }
}

/// Community centers: `θ(x, i, a) = centers[a][i]`, independent of `x`.
#[derive(Debug, Clone)]
pub struct CenterTheta {
    centers: Vec<Vec<f64>>,
}

impl CenterTheta {
    /// `centers[a]` is the `p`-dimensional mean of community `a`.
    pub fn new(centers: Vec<Vec<f64>>) -> Result<Self> {
        let p = centers.first().map(Vec::len).unwrap_or(0);
        if centers.iter().any(|c| c.len() != p) {
            return Err(Error::DimensionMismatch("centers must share a dimension".into()));
        }
        Ok(Self { centers })
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map(Vec::len).unwrap_or(0)
    }

    pub fn communities(&self) -> usize {
        self.centers.len()
    }
}

impl Theta for CenterTheta {
    fn value(&self, _x: &CommunityAssignment, coord: usize, label: usize) -> f64 {
        self.centers[label][coord]
    }
}

/// Adapts a closure into a [`Theta`].
pub struct FnTheta<F> {
    f: F,
    symmetric: bool,
}

impl<F> FnTheta<F>
where
    F: Fn(&CommunityAssignment, usize, usize) -> f64 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f, symmetric: false }
    }

    /// Declares that every label permutation is θ-preserving. The caller is
    /// responsible for this being true.
    pub fn label_symmetric(f: F) -> Self {
        Self { f, symmetric: true }
    }
}

impl<F> Theta for FnTheta<F>
where
    F: Fn(&CommunityAssignment, usize, usize) -> f64 + Send + Sync,
{
    fn value(&self, x: &CommunityAssignment, coord: usize, label: usize) -> f64 {
        (self.f)(x, coord, label)
    }

    fn label_symmetric(&self) -> bool {
        self.symmetric
    }
}

/// A dense `p × n` matrix stored row-major, so the flat index of entry
/// `(i, j)` is `n·i + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    p: usize,
    n: usize,
    data: Vec<f64>,
}

impl ObservationMatrix {
    pub fn zeros(p: usize, n: usize) -> Self {
        Self { p, n, data: vec![0.0; p * n] }
    }

    pub fn from_flat(p: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != p * n {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {p}x{n} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("observation entries must be finite".into()));
        }
        Ok(Self { p, n, data })
    }

    pub fn from_fn(p: usize, n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(p * n);
        for i in 0..p {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { p, n, data }
    }

    pub fn rows(&self) -> usize {
        self.p
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.n * i + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[self.n * i + j] = v;
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.p == other.p && self.n == other.n
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.p, self.n, other.p, other.n
            )))
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { p: self.p, n: self.n, data })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { p: self.p, n: self.n, data })
    }

    /// Entrywise inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { p: self.p, n: self.n, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// CSV with `p` rows and `n` columns, no header.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.p {
            let row: Vec<String> = (0..self.n).map(|j| format!("{}", self.get(i, j))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|e| {
                        Error::Parse(format!("line {}: '{}': {e}", lineno + 1, v.trim()))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let p = rows.len();
        let n = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parse("ragged observation matrix".into()));
        }
        Self::from_flat(p, n, rows.concat())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_csv(&std::fs::read_to_string(path)?)
    }
}

/// What the objectives, `L_Σ` and the `η` statistics need from a model: the
/// signal matrix of an assignment and the bilinear form `uᵗ Σ† v` on
/// flattened `p × n` matrices.
pub trait SignalModel: Sync {
    fn vertices(&self) -> usize;
    fn coords(&self) -> usize;
    fn communities(&self) -> usize;

    /// `(A_x)_{i,j} = θ(x, i, x(j))`.
    fn signal(&self, x: &CommunityAssignment) -> ObservationMatrix;

    /// `Σ† v`, reshaped back to `p × n`.
    fn precision_apply(&self, v: &ObservationMatrix) -> ObservationMatrix;

    /// `Σ_{ij,kl} u_{ij} (Σ†)_{ij;kl} v_{kl}`.
    fn precision_form(&self, u: &ObservationMatrix, v: &ObservationMatrix) -> f64 {
        u.dot(&self.precision_apply(v))
    }

    /// Whether `x` and `z` are in the same equivalence class.
    fn equivalent(&self, x: &CommunityAssignment, z: &CommunityAssignment) -> bool;

    fn label_symmetric(&self) -> bool;

    fn check_assignment(&self, x: &CommunityAssignment) -> Result<()> {
        if x.n() != self.vertices() || x.k() != self.communities() {
            return Err(Error::DimensionMismatch(format!(
                "assignment (n={}, k={}) against model (n={}, k={})",
                x.n(),
                x.k(),
                self.vertices(),
                self.communities()
            )));
        }
        Ok(())
    }
}

/// A fully specified model: dimensions, `θ` and the covariance `Σ`, with the
/// eigen-structure, `Σ†` and `Σ^{1/2}` computed once at construction.
#[derive(Clone)]
pub struct ModelSpec {
    n: usize,
    p: usize,
    k: usize,
    theta: Arc<dyn Theta>,
    sigma: SymMatrix,
    factor: EigenFactorization,
    pinv: SymMatrix,
    sqrt: SymMatrix,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("n", &self.n)
            .field("p", &self.p)
            .field("k", &self.k)
            .field("rank", &self.factor.rank)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn new(n: usize, p: usize, k: usize, theta: Arc<dyn Theta>, sigma: SymMatrix) -> Result<Self> {
        Self::check_dims(n, p, k, &sigma)?;
        let factor = linalg::eigen(&sigma, RANK_CUTOFF);
        let sqrt = linalg::sqrt_psd_of(&factor)?;
        let pinv = linalg::moore_penrose_of(&factor);
        Ok(Self { n, p, k, theta, sigma, factor, pinv, sqrt })
    }

    /// Uses a caller-supplied `Σ†` (e.g. a known closed form) instead of the
    /// numerically computed one. `Σ` is still factorized for sampling and
    /// the density normalizer.
    pub fn with_pseudo_inverse(
        n: usize,
        p: usize,
        k: usize,
        theta: Arc<dyn Theta>,
        sigma: SymMatrix,
        pinv: SymMatrix,
    ) -> Result<Self> {
        Self::check_dims(n, p, k, &sigma)?;
        if pinv.dim() != sigma.dim() {
            return Err(Error::DimensionMismatch("Σ† must match Σ".into()));
        }
        let factor = linalg::eigen(&sigma, RANK_CUTOFF);
        let sqrt = linalg::sqrt_psd_of(&factor)?;
        Ok(Self { n, p, k, theta, sigma, factor, pinv, sqrt })
    }

    fn check_dims(n: usize, p: usize, k: usize, sigma: &SymMatrix) -> Result<()> {
        if n == 0 || p == 0 || k == 0 {
            return Err(Error::InvalidParameter("n, p, k must be positive".into()));
        }
        if k > u8::MAX as usize {
            return Err(Error::InvalidParameter("k must fit in a byte".into()));
        }
        if sigma.dim() != n * p {
            return Err(Error::DimensionMismatch(format!(
                "Σ is {0}x{0}, expected pn = {1}",
                sigma.dim(),
                n * p
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn theta(&self) -> &dyn Theta {
        self.theta.as_ref()
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn sigma_pinv(&self) -> &SymMatrix {
        &self.pinv
    }

    pub fn sigma_sqrt(&self) -> &SymMatrix {
        &self.sqrt
    }

    pub fn factorization(&self) -> &EigenFactorization {
        &self.factor
    }

    /// `(A_x)_{i,j} = θ(x, i, x(j))`.
    pub fn signal_matrix(&self, x: &CommunityAssignment) -> Result<ObservationMatrix> {
        self.check_assignment(x)?;
        Ok(self.signal(x))
    }

    /// Draws `W = unflatten(Σ^{1/2} z)` with `z` standard normal.
    pub fn sample_noise(&self, seed: u64) -> ObservationMatrix {
        self.sample_noise_with(&mut rng_from_seed(seed))
    }

    pub fn sample_noise_with<R: Rng + ?Sized>(&self, rng: &mut R) -> ObservationMatrix {
        let dim = self.n * self.p;
        let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let w = self.sqrt.mul_vec(&z);
        ObservationMatrix { p: self.p, n: self.n, data: w }
    }

    /// `K_y = A_y + W` with `W` drawn from `seed`.
    pub fn observe(&self, y: &CommunityAssignment, seed: u64) -> Result<ObservationMatrix> {
        let a = self.signal_matrix(y)?;
        a.try_add(&self.sample_noise(seed))
    }

    /// `log` of the degenerate Gaussian density of `K` with mean `A_x`,
    /// relative to Lebesgue measure on `A_x + range(Σ)`:
    /// `-(pn/2) log 2π - (1/2) log det* Σ - G_Σ/2`.
    pub fn log_density(&self, x: &CommunityAssignment, k_obs: &ObservationMatrix) -> Result<f64> {
        let a = self.signal_matrix(x)?;
        let r = k_obs.try_sub(&a)?;
        let norm = r.frobenius_sq().sqrt();
        if norm > 0.0 {
            let off = self.factor.null_space_norm(r.flat());
            if off > SUPPORT_TOLERANCE * norm {
                return Err(Error::OffSupport(off / norm));
            }
        }
        let g = self.pinv.bilinear(r.flat(), r.flat());
        let dim = (self.n * self.p) as f64;
        let log_det = linalg::log_pseudo_determinant_of(&self.factor);
        Ok(-0.5 * dim * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * g)
    }
}

impl SignalModel for ModelSpec {
    fn vertices(&self) -> usize {
        self.n
    }

    fn coords(&self) -> usize {
        self.p
    }

    fn communities(&self) -> usize {
        self.k
    }

    fn signal(&self, x: &CommunityAssignment) -> ObservationMatrix {
        ObservationMatrix::from_fn(self.p, self.n, |i, j| self.theta.value(x, i, x.label(j)))
    }

    fn precision_apply(&self, v: &ObservationMatrix) -> ObservationMatrix {
        ObservationMatrix { p: self.p, n: self.n, data: self.pinv.mul_vec(v.flat()) }
    }

    fn precision_form(&self, u: &ObservationMatrix, v: &ObservationMatrix) -> f64 {
        self.pinv.bilinear(u.flat(), v.flat())
    }

    fn equivalent(&self, x: &CommunityAssignment, z: &CommunityAssignment) -> bool {
        crate::assignment::is_equivalent(x, z, self.theta.as_ref(), self.p).is_some()
    }

    fn label_symmetric(&self) -> bool {
        self.theta.label_symmetric()
    }
}
