//! Self-checks run by `dgmm verify`. Each one recomputes a closed form
//! numerically, or compares a Monte Carlo estimate with its exact value.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::assignment::{confusion_table, CommunityAssignment};
use crate::bounds::{self, GaussianVector};
use crate::error::Result;
use crate::linalg::{self, SymMatrix, RANK_CUTOFF};
use crate::mle::{self, solve_unknown_sizes_with, SolverOptions};
use crate::model::SignalModel;
use crate::rng::rng_from_seed;
use crate::vertexsum::{self, NoiseRegime, VertexSumObjective, VertexSumSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn outcome(name: &'static str, res: Result<(bool, String)>) -> CheckOutcome {
    match res {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome { name, passed: false, detail: format!("error: {e}") },
    }
}

type Check = fn(u64) -> Result<(bool, String)>;

const CHECKS: &[(&str, Check)] = &[
    ("linalg.penrose_axioms", penrose_axioms),
    ("linalg.pseudo_determinant", pseudo_determinant),
    ("vertexsum.spectrum", spectrum),
    ("vertexsum.pseudo_inverse", pseudo_inverse),
    ("vertexsum.l_sigma_closed_form", l_sigma_closed_form),
    ("vertexsum.balanced_quartic", balanced_quartic),
    ("vertexsum.b_complement_constant", b_complement),
    ("mle.noiseless_recovery", noiseless_recovery),
    ("bounds.impossibility_premise", impossibility_premise),
    ("bounds.max_upper_bound", max_upper_bound),
    ("bounds.max_lower_bound_exact", max_lower_bound_exact),
];

/// Runs every check with randomness derived from `seed`.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    CHECKS.iter().map(|&(name, f)| outcome(name, f(seed))).collect()
}

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|&(name, _)| name).collect()
}

fn random_psd(dim: usize, rank: usize, seed: u64) -> Result<SymMatrix> {
    let mut rng = rng_from_seed(seed);
    let g = nalgebra::DMatrix::<f64>::from_fn(dim, rank, |_, _| rng.sample(StandardNormal));
    SymMatrix::new(&g * g.transpose())
}

fn penrose_axioms(seed: u64) -> Result<(bool, String)> {
    let a = random_psd(12, 7, seed)?;
    let ap = linalg::moore_penrose(&a);
    let r = linalg::penrose_residuals(a.as_matrix(), ap.as_matrix());
    let worst = r.iter().cloned().fold(0.0, f64::max) / a.max_abs().max(ap.max_abs());
    Ok((worst <= 1e-9, format!("max relative residual {worst:.2e} (12x12, rank 7)")))
}

fn pseudo_determinant(_seed: u64) -> Result<(bool, String)> {
    let d = linalg::pseudo_determinant(&SymMatrix::from_diagonal(&[2.0, 3.0, 0.0]));
    Ok(((d - 6.0).abs() <= 1e-12, format!("det*(diag(2, 3, 0)) = {d}")))
}

fn spectrum(_seed: u64) -> Result<(bool, String)> {
    let s = 0.7;
    let mut worst = 0.0f64;
    for n in 2..=7 {
        let spec = VertexSumSpec::new(n, 0.5, s)?;
        let eig = linalg::eigen(&vertexsum::build_sigma(&spec), RANK_CUTOFF).eigenvalues;
        let nf = n as f64;
        let mut expected = vec![0.0; n * n];
        expected[0] = 4.0 * nf * s * s;
        expected[1..n].fill(2.0 * nf * s * s);
        let err = eig.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err / (nf * s * s));
    }
    Ok((worst <= 1e-9, format!("n = 2..=7, max eigenvalue error {worst:.2e} ns²")))
}

fn pseudo_inverse(_seed: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for n in 2..=6 {
        let spec = VertexSumSpec::new(n, 0.5, 1.3)?;
        let closed = vertexsum::build_sigma_pinv(&spec);
        let numeric = linalg::moore_penrose(&vertexsum::build_sigma(&spec));
        let diff = (closed.as_matrix() - numeric.as_matrix()).amax() / numeric.max_abs();
        worst = worst.max(diff);
    }
    Ok((worst <= 1e-9, format!("n = 2..=6, max relative entry error {worst:.2e}")))
}

/// Every assignment of `n` vertices to two labels.
fn all_two_label(n: usize) -> impl Iterator<Item = CommunityAssignment> {
    (0u32..1 << n).map(move |bits| {
        let labels = (0..n).map(|v| ((bits >> (n - 1 - v)) & 1) as u8).collect();
        CommunityAssignment::new(labels, 2).expect("two labels")
    })
}

fn l_sigma_closed_form(_seed: u64) -> Result<(bool, String)> {
    let spec = VertexSumSpec::new(6, 4.0 / 6.0, 0.8)?;
    let dense = spec.dense_model()?;
    let y = spec.truth();
    let mut worst = 0.0f64;
    for x in all_two_label(6) {
        let closed = vertexsum::l_sigma_assignments(&spec, &x, &y)?;
        let generic = mle::l_sigma(&dense, &x, &y)?;
        worst = worst.max((closed - generic).abs() / generic.abs().max(1e-12));
    }
    Ok((worst <= 1e-8, format!("n = 6, all 64 assignments, max relative error {worst:.2e}")))
}

fn balanced_quartic(_seed: u64) -> Result<(bool, String)> {
    let spec = VertexSumSpec::new(6, 0.5, 0.9)?;
    let y = spec.truth();
    let mut count = 0;
    let mut ok = true;
    for x in all_two_label(6) {
        let t = confusion_table(&x, &y)?;
        if t.get(0, 0) != t.get(1, 1) {
            continue;
        }
        count += 1;
        let b = t.get(0, 0) as i64 - t.get(1, 1) as i64;
        let closed = vertexsum::l_sigma_closed(&spec, &t)?;
        ok &= (closed - vertexsum::balanced_quartic(6, spec.s(), b)).abs() <= 1e-12 && closed == 0.0;
    }
    Ok((ok, format!("alpha = 1/2, n = 6: L = 0 on all {count} tables with t11 = t22")))
}

fn b_complement(_seed: u64) -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (alpha, eps) in [(0.6, 0.1), (0.64, 0.15)] {
        let spec = VertexSumSpec::new(50, alpha, 1.0)?;
        let c = vertexsum::b_complement_constant(alpha, eps)?;
        let min = vertexsum::b_complement_minimum(&spec, eps)?.map(|(v, _)| v).unwrap_or(f64::INFINITY);
        ok &= min >= c;
        parts.push(format!("({alpha}, {eps}): min {min:.4e} vs C {c:.4e}"));
    }
    Ok((ok, format!("n = 50, {}", parts.join("; "))))
}

fn noiseless_recovery(_seed: u64) -> Result<(bool, String)> {
    let spec = VertexSumSpec::new(8, 5.0 / 8.0, 0.3)?;
    let y = spec.truth();
    let obj = VertexSumObjective::new(&spec, &spec.signal(&y))?;
    let mut r = solve_unknown_sizes_with(&obj, 0.0, &SolverOptions::default())?;
    r.mark_truth(&obj, &y);
    Ok((r.recovered(false), format!("n = 8, minimizer {} (truth {y})", r.minimizer)))
}

/// `√(2 λ₀ log h)` for the first `h = ⌈n/(log n)²⌉` vertices of community 1,
/// with `α = 16/25` and `δ = 1/2`.
pub fn premise_at(n: usize, regime: NoiseRegime, sqrt_factor: f64) -> Result<f64> {
    let alpha = 16.0 / 25.0;
    let s = vertexsum::noise_scale(n, alpha, 0.5, sqrt_factor, regime)?;
    let spec = VertexSumSpec::new(n, alpha, s)?;
    let members = bounds::singles_in_community(&spec.truth(), 0, bounds::default_subset_size(n));
    Ok(bounds::eta_covariance_matrix(&spec, &spec.truth(), &members)?.premise_statistic())
}

fn impossibility_premise(_seed: u64) -> Result<(bool, String)> {
    let high = premise_at(400, NoiseRegime::High, 2.0)?;
    let low = premise_at(400, NoiseRegime::Low, 32.0)?;
    Ok((high > 1.0 && low <= 1.0, format!("n = 400: high-noise {high:.4}, low-noise {low:.4}")))
}

fn max_upper_bound(seed: u64) -> Result<(bool, String)> {
    let (n, eps, trials) = (1000, 0.5, 2000);
    let frac = bounds::max_gaussian_upper_bound_check(&GaussianVector::iid(n), eps, trials, seed);
    let allow = bounds::upper_bound_allowance(n, eps, trials);
    Ok((frac <= allow, format!("i.i.d. N = {n}, eps = {eps}: exceedance {frac:.4} <= {allow:.4}")))
}

fn max_lower_bound_exact(seed: u64) -> Result<(bool, String)> {
    let (n, eps, trials) = (1000, 0.2, 2000);
    let g = GaussianVector::iid(n);
    let frac = bounds::max_gaussian_lower_bound_check(&g, eps, trials, seed);
    let p = bounds::iid_exceedance_probability(n, bounds::lower_bound_threshold(&g, eps));
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    Ok(((frac - p).abs() <= 5.0 * se + 1e-12, format!("i.i.d. N = {n}, eps = {eps}: {frac:.4} vs exact {p:.4}")))
}
