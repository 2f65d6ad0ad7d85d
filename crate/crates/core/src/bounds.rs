//! The `η` statistics behind the impossibility results, their exact
//! covariance matrices, and Monte Carlo checks on maxima of dependent
//! Gaussian vectors.
//!
//! For a perturbation `x` of the truth `y`,
//! `η_x = 2 (A_x - A_y)ᵗ Σ† W / L_Σ(x, y)`; it is centered Gaussian and the
//! covariance of a family is `Γᵗ Σ† Γ` where column `x` of `Γ` is
//! `2 (A_x - A_y) / L_Σ(x, y)`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::assignment::CommunityAssignment;
use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix, RANK_CUTOFF};
use crate::model::{ObservationMatrix, SignalModel};
use crate::rng::rng_stream;

/// One perturbation of the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EtaMember {
    /// `y^{(a)}`: vertex `a` moved to the next label (mod `k`).
    Single(usize),
    /// `y^{(ab)}`: the labels of `a` and `b` exchanged.
    Swap(usize, usize),
}

impl EtaMember {
    pub fn perturb(&self, y: &CommunityAssignment) -> Result<CommunityAssignment> {
        match *self {
            EtaMember::Single(a) => {
                if a >= y.n() {
                    return Err(Error::InvalidParameter(format!("vertex {a} out of range")));
                }
                Ok(y.with_label(a, (y.label(a) + 1) % y.k()))
            }
            EtaMember::Swap(a, b) => {
                if a >= y.n() || b >= y.n() {
                    return Err(Error::InvalidParameter(format!("vertex pair ({a}, {b}) out of range")));
                }
                if y.label(a) == y.label(b) {
                    return Err(Error::InvalidParameter(format!(
                        "vertices {a} and {b} share a community; the swap is trivial"
                    )));
                }
                Ok(y.swapped(a, b))
            }
        }
    }
}

/// `A_x - A_y` and `L_Σ(x, y)` for a member, failing when `L_Σ = 0`.
fn direction<M: SignalModel + ?Sized>(
    model: &M,
    y: &CommunityAssignment,
    member: EtaMember,
) -> Result<(ObservationMatrix, f64)> {
    model.check_assignment(y)?;
    let x = member.perturb(y)?;
    let d = model.signal(&x).try_sub(&model.signal(y))?;
    let l = model.precision_form(&d, &d);
    if l.is_nan() || l <= 0.0 {
        return Err(Error::Degenerate(format!("L_Σ = {l} for {member:?}")));
    }
    Ok((d, l))
}

fn eta<M: SignalModel + ?Sized>(
    model: &M,
    y: &CommunityAssignment,
    member: EtaMember,
    w: &ObservationMatrix,
) -> Result<f64> {
    let (d, l) = direction(model, y, member)?;
    if !d.same_shape(w) {
        return Err(Error::DimensionMismatch("noise shape".into()));
    }
    Ok(2.0 * model.precision_form(&d, w) / l)
}

/// `η_a` for the noise realization `w`.
pub fn eta_single<M: SignalModel + ?Sized>(
    model: &M,
    y: &CommunityAssignment,
    a: usize,
    w: &ObservationMatrix,
) -> Result<f64> {
    eta(model, y, EtaMember::Single(a), w)
}

/// `η_{ab}` for the noise realization `w`.
pub fn eta_swap<M: SignalModel + ?Sized>(
    model: &M,
    y: &CommunityAssignment,
    a: usize,
    b: usize,
    w: &ObservationMatrix,
) -> Result<f64> {
    eta(model, y, EtaMember::Swap(a, b), w)
}

/// A family of `η` statistics with its exact covariance.
#[derive(Debug, Clone)]
pub struct EtaEnsemble {
    pub members: Vec<EtaMember>,
    /// `Γᵗ Σ† Γ`.
    pub covariance: SymMatrix,
    /// Smallest eigenvalue of the covariance (`λ₀` or `μ₀`).
    pub min_eigenvalue: f64,
    /// Smallest eigenvalue of `Γᵗ Γ`, the squared smallest singular value of `Γ`.
    pub gamma_min_singular_sq: f64,
}

impl EtaEnsemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `√(2 λ₀ log |H|)`.
    pub fn premise_statistic(&self) -> f64 {
        premise_statistic(self.min_eigenvalue, self.len())
    }
}

/// `√(2 λ₀ log h)`.
pub fn premise_statistic(lambda0: f64, h: usize) -> f64 {
    (2.0 * lambda0.max(0.0) * (h as f64).ln()).sqrt()
}

/// `Φ_H` (for [`EtaMember::Single`] members) or `Ψ` (for swaps), computed
/// as `Γᵗ Σ† Γ`.
pub fn eta_covariance_matrix<M: SignalModel + ?Sized>(
    model: &M,
    y: &CommunityAssignment,
    members: &[EtaMember],
) -> Result<EtaEnsemble> {
    if members.is_empty() {
        return Err(Error::InvalidParameter("empty statistic family".into()));
    }
    let cols = members
        .par_iter()
        .map(|&m| {
            let (d, l) = direction(model, y, m)?;
            let gamma = d.scaled(2.0 / l);
            let pg = model.precision_apply(&gamma);
            Ok((gamma, pg))
        })
        .collect::<Result<Vec<_>>>()?;
    let h = members.len();
    let cov = SymMatrix::from_fn(h, |i, j| cols[i].0.dot(&cols[j].1));
    let gram = SymMatrix::from_fn(h, |i, j| cols[i].0.dot(&cols[j].0));
    let min_eigenvalue = linalg::eigen(&cov, RANK_CUTOFF).min_eigenvalue();
    let gamma_min_singular_sq = linalg::eigen(&gram, RANK_CUTOFF).min_eigenvalue();
    Ok(EtaEnsemble { members: members.to_vec(), covariance: cov, min_eigenvalue, gamma_min_singular_sq })
}

/// `⌈n / (log n)²⌉`, at least 1.
pub fn default_subset_size(n: usize) -> usize {
    let l = (n as f64).ln();
    ((n as f64 / (l * l)).ceil() as usize).clamp(1, n)
}

/// Single-move members for the first `h` vertices of community `label`
/// under `y`.
pub fn singles_in_community(y: &CommunityAssignment, label: usize, h: usize) -> Vec<EtaMember> {
    (0..y.n()).filter(|&v| y.label(v) == label).take(h).map(EtaMember::Single).collect()
}

/// A centered Gaussian vector, either with independent coordinates or with
/// a full covariance matrix.
#[derive(Debug, Clone)]
pub enum GaussianVector {
    Independent(Vec<f64>),
    Correlated { covariance: SymMatrix, sqrt: SymMatrix, min_eigenvalue: f64 },
}

impl GaussianVector {
    /// `N` independent standard normals.
    pub fn iid(n: usize) -> Self {
        GaussianVector::Independent(vec![1.0; n])
    }

    pub fn independent(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() || variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("variances must be finite and non-negative".into()));
        }
        Ok(GaussianVector::Independent(variances))
    }

    pub fn correlated(covariance: SymMatrix) -> Result<Self> {
        if covariance.dim() == 0 {
            return Err(Error::InvalidParameter("empty covariance".into()));
        }
        let f = linalg::eigen(&covariance, RANK_CUTOFF);
        let sqrt = linalg::sqrt_psd_of(&f)?;
        let min_eigenvalue = f.min_eigenvalue().max(0.0);
        Ok(GaussianVector::Correlated { covariance, sqrt, min_eigenvalue })
    }

    pub fn dim(&self) -> usize {
        match self {
            GaussianVector::Independent(v) => v.len(),
            GaussianVector::Correlated { covariance, .. } => covariance.dim(),
        }
    }

    /// `λ₀`, the smallest eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            GaussianVector::Independent(v) => v.iter().cloned().fold(f64::INFINITY, f64::min),
            GaussianVector::Correlated { min_eigenvalue, .. } => *min_eigenvalue,
        }
    }

    pub fn max_variance(&self) -> f64 {
        match self {
            GaussianVector::Independent(v) => v.iter().cloned().fold(0.0, f64::max),
            GaussianVector::Correlated { covariance, .. } => {
                (0..covariance.dim()).map(|i| covariance.get(i, i)).fold(0.0, f64::max)
            }
        }
    }

    /// One draw of `max_i X_i`.
    pub fn sample_max<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            GaussianVector::Independent(v) => v
                .iter()
                .map(|var| var.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .fold(f64::NEG_INFINITY, f64::max),
            GaussianVector::Correlated { sqrt, .. } => {
                let z: Vec<f64> = (0..sqrt.dim()).map(|_| rng.sample(StandardNormal)).collect();
                sqrt.mul_vec(&z).into_iter().fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }
}

/// Fraction of `trials` draws with `max_i X_i > threshold`. Trial `t` uses
/// stream `t` of `seed`, so the result does not depend on scheduling.
pub fn exceedance_fraction(g: &GaussianVector, threshold: f64, trials: usize, seed: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let hits: usize = (0..trials)
        .into_par_iter()
        .map(|t| (g.sample_max(&mut rng_stream(seed, t as u64)) > threshold) as usize)
        .sum();
    hits as f64 / trials as f64
}

/// `√(2 λ₀ log N)(1 - ε)`.
pub fn lower_bound_threshold(g: &GaussianVector, epsilon: f64) -> f64 {
    (2.0 * g.min_eigenvalue() * (g.dim() as f64).ln()).sqrt() * (1.0 - epsilon)
}

/// `(1 + ε)√(2 max Var log N)`.
pub fn upper_bound_threshold(g: &GaussianVector, epsilon: f64) -> f64 {
    (1.0 + epsilon) * (2.0 * g.max_variance() * (g.dim() as f64).ln()).sqrt()
}

/// Empirical `Pr(M_N ≥ √(2 λ₀ log N)(1 - ε))`.
pub fn max_gaussian_lower_bound_check(g: &GaussianVector, epsilon: f64, trials: usize, seed: u64) -> f64 {
    exceedance_fraction(g, lower_bound_threshold(g, epsilon), trials, seed)
}

/// Empirical `Pr(M_N > (1 + ε)√(2 max Var log N))`.
pub fn max_gaussian_upper_bound_check(g: &GaussianVector, epsilon: f64, trials: usize, seed: u64) -> f64 {
    exceedance_fraction(g, upper_bound_threshold(g, epsilon), trials, seed)
}

/// `N^{-ε} + 4√(N^{-ε}/trials)`: the tail bound plus Monte Carlo slack.
pub fn upper_bound_allowance(n: usize, epsilon: f64, trials: usize) -> f64 {
    let b = (n as f64).powf(-epsilon);
    b + 4.0 * (b / trials as f64).sqrt()
}

/// `1 - Φ(t)^N`, the exact exceedance probability for `N` i.i.d. standard
/// normals.
pub fn iid_exceedance_probability(n: usize, threshold: f64) -> f64 {
    let phi = Normal::standard().cdf(threshold);
    1.0 - phi.powf(n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mle::l_sigma;
    use crate::model::ModelSpec;
    use crate::rng::rng_from_seed;
    use crate::vertexsum::VertexSumSpec;
    use std::sync::Arc;

    fn vs(n: usize, alpha: f64, s: f64) -> VertexSumSpec {
        VertexSumSpec::new(n, alpha, s).unwrap()
    }

    #[test]
    fn eta_vanishes_without_noise() {
        let sp = vs(10, 0.6, 0.4);
        let y = sp.truth();
        let w = ObservationMatrix::zeros(10, 10);
        assert_eq!(eta_single(&sp, &y, 2, &w).unwrap(), 0.0);
        assert_eq!(eta_swap(&sp, &y, 2, 8, &w).unwrap(), 0.0);
    }

    #[test]
    fn swap_requires_distinct_communities() {
        let sp = vs(10, 0.6, 0.4);
        let y = sp.truth();
        let w = sp.sample_noise(1);
        assert!(eta_swap(&sp, &y, 0, 1, &w).is_err());
        assert!(eta_single(&sp, &y, 10, &w).is_err());
    }

    #[test]
    fn degenerate_member_is_rejected() {
        // n = 2, sizes (1, 1): swapping the two vertices is a relabeling
        let sp = vs(2, 0.5, 1.0);
        let y = sp.truth();
        let r = eta_covariance_matrix(&sp, &y, &[EtaMember::Swap(0, 1)]);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn single_member_covariance() {
        let sp = vs(12, 0.6, 0.3);
        let y = sp.truth();
        let e = eta_covariance_matrix(&sp, &y, &[EtaMember::Single(4)]).unwrap();
        let l = l_sigma(&sp, &y.with_label(4, 1), &y).unwrap();
        assert!((e.covariance.get(0, 0) - 4.0 / l).abs() < 1e-12 * (4.0 / l));
    }

    fn mc_moments(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let m = samples[0].len();
        let t = samples.len() as f64;
        let mean: Vec<f64> = (0..m).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / t).collect();
        let cov = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| samples.iter().map(|s| (s[i] - mean[i]) * (s[j] - mean[j])).sum::<f64>() / (t - 1.0))
                    .collect()
            })
            .collect();
        (mean, cov)
    }

    #[test]
    fn exact_covariance_matches_sampling() {
        let sp = vs(8, 0.625, 0.5);
        let y = sp.truth();
        let members = [
            EtaMember::Single(0),
            EtaMember::Single(1),
            EtaMember::Single(6),
            EtaMember::Swap(2, 7),
            EtaMember::Swap(3, 5),
        ];
        let ens = eta_covariance_matrix(&sp, &y, &members).unwrap();
        let trials = 100_000;
        let samples: Vec<Vec<f64>> = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let w = sp.sample_noise_with(&mut rng_stream(5, t));
                members.iter().map(|&m| eta(&sp, &y, m, &w).unwrap()).collect()
            })
            .collect();
        let (mean, cov) = mc_moments(&samples);
        for i in 0..members.len() {
            let sd = ens.covariance.get(i, i).sqrt();
            assert!(mean[i].abs() < 4.0 * sd / (trials as f64).sqrt(), "mean {i}");
            for j in 0..members.len() {
                let c = ens.covariance.get(i, j);
                // se of a sample covariance of jointly Gaussian pairs
                let se = ((ens.covariance.get(i, i) * ens.covariance.get(j, j) + c * c) / trials as f64).sqrt();
                assert!((cov[i][j] - c).abs() < 5.0 * se, "({i},{j}): {} vs {c}", cov[i][j]);
            }
        }
    }

    #[test]
    fn eigenvalue_chain_on_full_rank_model() {
        let n = 5;
        let mut rng = rng_from_seed(21);
        let b: Vec<f64> = (0..n * n * n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sigma = SymMatrix::from_fn(n * n, |i, j| {
            (0..n * n).map(|r| b[i * n * n + r] * b[j * n * n + r]).sum::<f64>() + if i == j { 0.1 } else { 0.0 }
        });
        let m = ModelSpec::new(n, n, 2, Arc::new(crate::model::SameCommunityTheta), sigma).unwrap();
        assert_eq!(m.factorization().rank, n * n);
        let y = CommunityAssignment::blocks(&[3, 2]).unwrap();
        let members: Vec<EtaMember> = (0..n).map(EtaMember::Single).collect();
        let e = eta_covariance_matrix(&m, &y, &members).unwrap();
        let lambda1 = m.factorization().max_eigenvalue();
        assert!(e.min_eigenvalue >= e.gamma_min_singular_sq / lambda1 * (1.0 - 1e-9));
    }

    #[test]
    fn subset_size() {
        assert_eq!(default_subset_size(400), 12);
        assert_eq!(default_subset_size(3), 3);
        let y = CommunityAssignment::blocks(&[3, 4]).unwrap();
        assert_eq!(
            singles_in_community(&y, 1, 2),
            vec![EtaMember::Single(3), EtaMember::Single(4)]
        );
    }

    #[test]
    fn iid_lower_bound_probability() {
        let g = GaussianVector::iid(2_000);
        let t = lower_bound_threshold(&g, 0.2);
        let exact = iid_exceedance_probability(2_000, t);
        let trials = 4_000;
        let p = max_gaussian_lower_bound_check(&g, 0.2, trials, 3);
        let se = (exact * (1.0 - exact) / trials as f64).sqrt();
        assert!((p - exact).abs() < 4.0 * se.max(1e-3), "{p} vs {exact}");
    }

    #[test]
    fn single_variable_edge_case() {
        let g = GaussianVector::iid(1);
        assert_eq!(lower_bound_threshold(&g, 0.2), 0.0);
        let p = max_gaussian_lower_bound_check(&g, 0.2, 20_000, 8);
        assert!((p - 0.5).abs() < 4.0 * (0.25f64 / 20_000.0).sqrt());
    }

    #[test]
    fn iid_upper_bound() {
        let g = GaussianVector::iid(1_000);
        let trials = 4_000;
        let p = max_gaussian_upper_bound_check(&g, 0.5, trials, 4);
        assert!(p <= upper_bound_allowance(1_000, 0.5, trials));
        let exact = iid_exceedance_probability(1_000, upper_bound_threshold(&g, 0.5));
        assert!(exact <= (1_000f64).powf(-0.5));
        let far = max_gaussian_upper_bound_check(&g, 3.0, 1_000, 4);
        assert_eq!(far, 0.0);
    }

    #[test]
    fn correlated_upper_bound_from_vertex_sum_model() {
        let sp = vs(40, 0.625, 0.1);
        let y = sp.truth();
        let members: Vec<EtaMember> = (0..40).map(EtaMember::Single).collect();
        let ens = eta_covariance_matrix(&sp, &y, &members).unwrap();
        let g = GaussianVector::correlated(ens.covariance.clone()).unwrap();
        let trials = 4_000;
        for eps in [0.3, 0.5] {
            let p = max_gaussian_upper_bound_check(&g, eps, trials, 9);
            assert!(p <= upper_bound_allowance(40, eps, trials), "eps={eps}: {p}");
        }
    }

    #[test]
    fn independent_variances_validated() {
        assert!(GaussianVector::independent(vec![]).is_err());
        assert!(GaussianVector::independent(vec![1.0, -1.0]).is_err());
        let g = GaussianVector::independent(vec![1.0, 4.0]).unwrap();
        assert_eq!(g.max_variance(), 4.0);
        assert_eq!(g.min_eigenvalue(), 1.0);
    }

    #[test]
    fn runs_are_reproducible() {
        let g = GaussianVector::iid(50);
        let a = max_gaussian_upper_bound_check(&g, 0.1, 500, 77);
        let b = max_gaussian_upper_bound_check(&g, 0.1, 500, 77);
        assert_eq!(a, b);
    }
}
