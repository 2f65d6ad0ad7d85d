//! The two-community model with `θ(x, i, a) = [x(i) = a]` (so `p = n` and
//! `(A_x)_{i,j} = [x(i) = x(j)]`) and vertex-sum noise
//! `W_{i,j} = ξ_i + ξ_j`, `ξ_v ~ N(0, s²)` i.i.d.
//!
//! Writing `M` for the `n² × n` incidence map `(Mξ)_{i,j} = ξ_i + ξ_j`, the
//! covariance is `Σ = s² M Mᵗ` and `Mᵗ M = 2nI + 2J`, so
//! `Σ† = s⁻² M G Mᵗ` with `G = (Mᵗ M)⁻² = (I - 3J/(4n)) / (4n²)`. Every
//! quadratic form therefore reduces to `n`-vectors of row plus column sums,
//! which is what [`VertexSumSpec`]'s [`SignalModel`] implementation uses.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::assignment::{confusion_table, in_b_epsilon, CommunityAssignment, ConfusionTable};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::mle::Objective;
use crate::model::{ModelSpec, ObservationMatrix, SameCommunityTheta, SignalModel};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexSumSpec {
    n: usize,
    alpha: f64,
    s: f64,
}

impl VertexSumSpec {
    /// `alpha` may be anywhere in `[1/2, 1)`; the closed-form bounds that
    /// need `α ∈ (1/2, 2/3)` check that themselves.
    pub fn new(n: usize, alpha: f64, s: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("n = {n} must be at least 2")));
        }
        if !(0.5..1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} outside [1/2, 1)")));
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidParameter(format!("s = {s} must be positive")));
        }
        Ok(Self { n, alpha, s })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// `⌊αn⌋`.
    pub fn n1(&self) -> usize {
        (self.alpha * self.n as f64 + 1e-9).floor() as usize
    }

    pub fn n2(&self) -> usize {
        self.n - self.n1()
    }

    pub fn sizes(&self) -> [usize; 2] {
        [self.n1(), self.n2()]
    }

    /// The first `⌊αn⌋` vertices in community 1, the rest in community 2.
    pub fn truth(&self) -> CommunityAssignment {
        CommunityAssignment::blocks(&self.sizes()).expect("two labels")
    }

    pub fn with_s(&self, s: f64) -> Result<Self> {
        Self::new(self.n, self.alpha, s)
    }

    /// `Σ_{(i,j),(k,l)}` for 0-based vertices.
    pub fn sigma_entry(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let c = (i == k) as u8 + (i == l) as u8 + (j == k) as u8 + (j == l) as u8;
        self.s * self.s * c as f64
    }

    /// `(Σ†)_{(i,j),(k,l)}` from the closed-form table.
    pub fn pinv_entry(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.n as f64;
        let in_kl = |v: usize| (v == k || v == l) as u8;
        let shared = if i == j { in_kl(i) } else { in_kl(i) + in_kl(j) };
        let num = match shared {
            0 => -3.0,
            _ if i == j && j == k && k == l => 4.0 * n - 3.0,
            1 if i != j && k != l => n - 3.0,
            _ => 2.0 * n - 3.0,
        };
        num / (4.0 * n * n * n * self.s * self.s)
    }

    /// The dense model on the same parameters, with `Σ†` taken from the
    /// closed form.
    pub fn dense_model(&self) -> Result<ModelSpec> {
        ModelSpec::with_pseudo_inverse(
            self.n,
            self.n,
            2,
            Arc::new(SameCommunityTheta),
            build_sigma(self),
            build_sigma_pinv(self),
        )
    }

    /// `W_{i,j} = ξ_i + ξ_j`.
    pub fn sample_noise(&self, seed: u64) -> ObservationMatrix {
        self.sample_noise_with(&mut rng_from_seed(seed))
    }

    pub fn sample_noise_with<R: Rng + ?Sized>(&self, rng: &mut R) -> ObservationMatrix {
        let xi: Vec<f64> = (0..self.n).map(|_| self.s * rng.sample::<f64, _>(StandardNormal)).collect();
        ObservationMatrix::from_fn(self.n, self.n, |i, j| xi[i] + xi[j])
    }

    pub fn observe(&self, y: &CommunityAssignment, seed: u64) -> Result<ObservationMatrix> {
        self.check_assignment(y)?;
        self.signal(y).try_add(&self.sample_noise(seed))
    }

    /// `Mᵗ u`: row sums plus column sums.
    fn vertex_sums(&self, u: &ObservationMatrix) -> Vec<f64> {
        let n = self.n;
        let mut m = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let v = u.get(i, j);
                m[i] += v;
                m[j] += v;
            }
        }
        m
    }

    /// `G m` with `G = (I - 3J/(4n)) / (4n²)`.
    fn apply_gram(&self, m: &[f64]) -> Vec<f64> {
        let n = self.n as f64;
        let total: f64 = m.iter().sum();
        m.iter().map(|&v| (v - 3.0 * total / (4.0 * n)) / (4.0 * n * n)).collect()
    }
}

impl SignalModel for VertexSumSpec {
    fn vertices(&self) -> usize {
        self.n
    }

    fn coords(&self) -> usize {
        self.n
    }

    fn communities(&self) -> usize {
        2
    }

    fn signal(&self, x: &CommunityAssignment) -> ObservationMatrix {
        ObservationMatrix::from_fn(self.n, self.n, |i, j| (x.label(i) == x.label(j)) as u8 as f64)
    }

    fn precision_apply(&self, v: &ObservationMatrix) -> ObservationMatrix {
        let g = self.apply_gram(&self.vertex_sums(v));
        let c = 1.0 / (self.s * self.s);
        ObservationMatrix::from_fn(self.n, self.n, |i, j| c * (g[i] + g[j]))
    }

    fn precision_form(&self, u: &ObservationMatrix, v: &ObservationMatrix) -> f64 {
        let mu = self.vertex_sums(u);
        let gv = self.apply_gram(&self.vertex_sums(v));
        mu.iter().zip(&gv).map(|(a, b)| a * b).sum::<f64>() / (self.s * self.s)
    }

    fn equivalent(&self, x: &CommunityAssignment, z: &CommunityAssignment) -> bool {
        x.same_partition(z)
    }

    fn label_symmetric(&self) -> bool {
        true
    }
}

/// The `n² × n²` covariance, `Σ_{(i,j),(k,l)} = s²(δ_ik + δ_il + δ_jk + δ_jl)`.
pub fn build_sigma(spec: &VertexSumSpec) -> SymMatrix {
    let n = spec.n;
    SymMatrix::from_fn(n * n, |a, b| spec.sigma_entry(a / n, a % n, b / n, b % n))
}

/// The closed-form `Σ†`.
pub fn build_sigma_pinv(spec: &VertexSumSpec) -> SymMatrix {
    let n = spec.n;
    SymMatrix::from_fn(n * n, |a, b| spec.pinv_entry(a / n, a % n, b / n, b % n))
}

/// `A = t₁₁ + t₂₂`, `B = t₁₁ - t₂₂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ABPair {
    pub a: i64,
    pub b: i64,
}

impl ABPair {
    pub fn from_table(t: &ConfusionTable) -> Self {
        let (t11, t22) = (t.get(0, 0) as i64, t.get(1, 1) as i64);
        Self { a: t11 + t22, b: t11 - t22 }
    }
}

fn check_table(spec: &VertexSumSpec, t: &ConfusionTable) -> Result<()> {
    if t.k() != 2 {
        return Err(Error::DimensionMismatch(format!("{}x{} table, expected 2x2", t.k(), t.k())));
    }
    if t.col_sums() != spec.sizes() {
        return Err(Error::InvalidSizes(format!(
            "column sums {:?} differ from community sizes {:?}",
            t.col_sums(),
            spec.sizes()
        )));
    }
    Ok(())
}

/// `n³s² L_Σ = (nA - 3B²)(B + n₂ - n₁)² + nB²(n - A)`, exact in integers.
pub fn l_sigma_numerator(spec: &VertexSumSpec, t: &ConfusionTable) -> Result<i128> {
    check_table(spec, t)?;
    let ab = ABPair::from_table(t);
    let (a, b) = (ab.a as i128, ab.b as i128);
    let n = spec.n as i128;
    let d = b + spec.n2() as i128 - spec.n1() as i128;
    Ok((n * a - 3 * b * b) * d * d + n * b * b * (n - a))
}

/// `L_Σ(x, y)` from the confusion table `t(x, y)`, using the exact column
/// sums `n₁ = ⌊αn⌋`, `n₂ = n - n₁` in place of `αn`, `(1-α)n`.
pub fn l_sigma_closed(spec: &VertexSumSpec, t: &ConfusionTable) -> Result<f64> {
    let num = l_sigma_numerator(spec, t)?;
    let n = spec.n as f64;
    Ok(num as f64 / (n * n * n * spec.s * spec.s))
}

/// `L_Σ(x, y)` for assignments, through their confusion table.
pub fn l_sigma_assignments(spec: &VertexSumSpec, x: &CommunityAssignment, y: &CommunityAssignment) -> Result<f64> {
    l_sigma_closed(spec, &confusion_table(x, y)?)
}

/// The quartic that `L_Σ` reduces to at `α = 1/2`:
/// `-3B⁴/(n³s²) + B²/(ns²)`.
pub fn balanced_quartic(n: usize, s: f64, b: i64) -> f64 {
    let (n, b) = (n as f64, b as f64);
    -3.0 * b.powi(4) / (n.powi(3) * s * s) + b * b / (n * s * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// A vertex of community 1 moves to community 2.
    OneToTwo,
    /// A vertex of community 2 moves to community 1.
    TwoToOne,
}

/// `L_Σ(y^{(a)}, y)` for a single vertex changing community, evaluated with
/// `α = n₁/n`.
pub fn single_move_gap(spec: &VertexSumSpec, direction: Direction) -> Result<f64> {
    let n = spec.n as f64;
    let al = spec.n1() as f64 / n;
    let (lin, unit) = match direction {
        Direction::TwoToOne => {
            if spec.n2() == 0 {
                return Err(Error::Degenerate("community 2 is empty".into()));
            }
            (-4.0 * (3.0 * al - 1.0) * (al - 1.0), -6.0 * (2.0 * al - 1.0))
        }
        Direction::OneToTwo => {
            if spec.n1() == 0 {
                return Err(Error::Degenerate("community 1 is empty".into()));
            }
            (-4.0 * al * (3.0 * al - 2.0), 6.0 * (2.0 * al - 1.0))
        }
    };
    let num = (2.0 * al - 1.0).powi(2) * n.powi(3) + lin * n * n + unit * n - 3.0;
    Ok(num / (spec.s * spec.s * n.powi(3)))
}

/// `(2α - 1)/√(8 log n)`.
pub fn recovery_threshold(n: usize, alpha: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n = {n} must be at least 2")));
    }
    check_alpha(alpha)?;
    Ok((2.0 * alpha - 1.0) / (8.0 * (n as f64).ln()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseRegime {
    /// `s = (1 - δ)(2α - 1)/√(c log n)`.
    Low,
    /// `s = (1 + δ)(2α - 1)/√(c log n)`.
    High,
}

impl fmt::Display for NoiseRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseRegime::Low => "low",
            NoiseRegime::High => "high",
        })
    }
}

impl FromStr for NoiseRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(NoiseRegime::Low),
            "high" => Ok(NoiseRegime::High),
            other => Err(Error::Parse(format!("noise regime '{other}' (expected low or high)"))),
        }
    }
}

/// `(1 ∓ δ)(2α - 1)/√(sqrt_factor · log n)`.
pub fn noise_scale(n: usize, alpha: f64, delta: f64, sqrt_factor: f64, regime: NoiseRegime) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n = {n} must be at least 2")));
    }
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside (1/2, 1)")));
    }
    if !(0.0..1.0).contains(&delta) || sqrt_factor.is_nan() || sqrt_factor <= 0.0 {
        return Err(Error::InvalidParameter("delta must lie in [0, 1) and sqrt_factor be positive".into()));
    }
    let side = match regime {
        NoiseRegime::Low => 1.0 - delta,
        NoiseRegime::High => 1.0 + delta,
    };
    Ok(side * (2.0 * alpha - 1.0) / (sqrt_factor * (n as f64).ln()).sqrt())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.5 && alpha < 2.0 / 3.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha = {alpha} outside (1/2, 2/3)")))
    }
}

/// `C_{α,ε} = min{α(2-3α)ε², (α-½)²[1-(α-½)²]ε(1+ε)², ε²(α-½)²}`.
pub fn b_complement_constant(alpha: f64, epsilon: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(epsilon > 0.0 && epsilon < (1.0 - alpha) / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} outside (0, (1-alpha)/2)"
        )));
    }
    let h = (alpha - 0.5).powi(2);
    let c1 = alpha * (2.0 - 3.0 * alpha) * epsilon * epsilon;
    let c2 = h * (1.0 - h) * epsilon * (1.0 + epsilon).powi(2);
    let c3 = epsilon * epsilon * h;
    Ok(c1.min(c2).min(c3))
}

/// Smallest `s² L_Σ / n` over all tables in `B \ B_ε`, with the table that
/// attains it. `None` when every table lies in `B_ε`.
pub fn b_complement_minimum(spec: &VertexSumSpec, epsilon: f64) -> Result<Option<(f64, ConfusionTable)>> {
    let (n1, n2) = (spec.n1(), spec.n2());
    let truth = spec.truth();
    let theta = SameCommunityTheta;
    let n = spec.n as f64;
    let mut best: Option<(f64, ConfusionTable)> = None;
    for t11 in 0..=n1 {
        for t22 in 0..=n2 {
            let t = ConfusionTable::from_counts(&[vec![t11, n2 - t22], vec![n1 - t11, t22]])?;
            if in_b_epsilon(&t, epsilon, &theta, &truth, spec.n) {
                continue;
            }
            let scaled = l_sigma_numerator(spec, &t)? as f64 / (n * n * n * n);
            if best.as_ref().is_none_or(|(v, _)| scaled < *v) {
                best = Some((scaled, t));
            }
        }
    }
    Ok(best)
}

/// `y^{(a)}`: vertex `a` moved to the other community.
pub fn single_move(y: &CommunityAssignment, a: usize) -> CommunityAssignment {
    y.with_label(a, 1 - y.label(a))
}

/// `E η_a² = 4/L_Σ(y^{(a)}, y)` when `a2` is `None`, otherwise
/// `E η_a η_{a2} = 4 (A_{y^{(a)}} - A_y)ᵗ Σ† (A_{y^{(a2)}} - A_y) / (L_a L_{a2})`,
/// with `y` the block truth of `spec`.
pub fn eta_moments(spec: &VertexSumSpec, a: usize, a2: Option<usize>) -> Result<f64> {
    let n = spec.n;
    if a >= n || a2.is_some_and(|b| b >= n) {
        return Err(Error::InvalidParameter("vertex out of range".into()));
    }
    let y = spec.truth();
    let ay = spec.signal(&y);
    let da = spec.signal(&single_move(&y, a)).try_sub(&ay)?;
    let la = spec.precision_form(&da, &da);
    if la <= 0.0 {
        return Err(Error::Degenerate(format!("L_Σ(y^({a}), y) = {la}")));
    }
    match a2 {
        None => Ok(4.0 / la),
        Some(b) => {
            let db = spec.signal(&single_move(&y, b)).try_sub(&ay)?;
            let lb = spec.precision_form(&db, &db);
            if lb <= 0.0 {
                return Err(Error::Degenerate(format!("L_Σ(y^({b}), y) = {lb}")));
            }
            Ok(4.0 * spec.precision_form(&da, &db) / (la * lb))
        }
    }
}

/// The four signed sums whose total is `L_Σ(x, y)`, computed by visiting
/// every index quadruple `(i, j, k, l)` and reading `Σ†` from the closed
/// table. `O(n⁴)`.
pub fn u_decomposition(spec: &VertexSumSpec, x: &CommunityAssignment, y: &CommunityAssignment) -> [f64; 4] {
    let n = spec.n;
    // +1: x joins, y separates; -1: x separates, y joins
    let kind = |i: usize, j: usize| -> i8 {
        match (x.label(i) == x.label(j), y.label(i) == y.label(j)) {
            (false, true) => -1,
            (true, false) => 1,
            _ => 0,
        }
    };
    let mut u = [0.0; 4];
    for i in 0..n {
        for j in 0..n {
            let p = kind(i, j);
            if p == 0 {
                continue;
            }
            for k in 0..n {
                for l in 0..n {
                    let q = kind(k, l);
                    if q == 0 {
                        continue;
                    }
                    let v = spec.pinv_entry(i, j, k, l);
                    match (p, q) {
                        (-1, -1) => u[0] += v,
                        (-1, 1) => u[1] -= v,
                        (1, -1) => u[2] -= v,
                        _ => u[3] += v,
                    }
                }
            }
        }
    }
    u
}

/// `f(x) = A_xᵗ Σ† A_x - 2 A_xᵗ Σ† K` in `O(n)` per assignment.
///
/// With `c_v = 2 n_{x(v)}` (the row plus column sums of `A_x`),
/// `A_xᵗ Σ† A_x = (Σ_a n_a³ - 3(Σ_a n_a²)²/(4n)) / (n² s²)` and
/// `A_xᵗ Σ† K = cᵗ G Mᵗ K / s²`.
pub struct VertexSumObjective {
    spec: VertexSumSpec,
    gk: Vec<f64>,
}

impl VertexSumObjective {
    pub fn new(spec: &VertexSumSpec, k_obs: &ObservationMatrix) -> Result<Self> {
        if k_obs.rows() != spec.n || k_obs.cols() != spec.n {
            return Err(Error::DimensionMismatch(format!(
                "observation {}x{} for n = {}",
                k_obs.rows(),
                k_obs.cols(),
                spec.n
            )));
        }
        let gk = spec.apply_gram(&spec.vertex_sums(k_obs));
        Ok(Self { spec: *spec, gk })
    }
}

impl Objective for VertexSumObjective {
    fn vertices(&self) -> usize {
        self.spec.n
    }

    fn communities(&self) -> usize {
        2
    }

    fn eval(&self, x: &CommunityAssignment) -> f64 {
        let n = self.spec.n as f64;
        let mut sizes = [0.0f64; 2];
        let mut gsum = [0.0f64; 2];
        for (v, &g) in self.gk.iter().enumerate() {
            let a = x.label(v);
            sizes[a] += 1.0;
            gsum[a] += g;
        }
        let cube: f64 = sizes.iter().map(|m| m * m * m).sum();
        let sq: f64 = sizes.iter().map(|m| m * m).sum();
        let quad = (cube - 3.0 * sq * sq / (4.0 * n)) / (n * n);
        let cross = 2.0 * (sizes[0] * gsum[0] + sizes[1] * gsum[1]);
        (quad - 2.0 * cross) / (self.spec.s * self.spec.s)
    }

    fn equivalent(&self, x: &CommunityAssignment, z: &CommunityAssignment) -> bool {
        x.same_partition(z)
    }

    fn label_symmetric(&self) -> bool {
        true
    }
}

/// `n`, `alpha`, `s` and `seed` as flat `key = value` lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexSumConfig {
    pub spec: VertexSumSpec,
    pub seed: u64,
}

impl VertexSumConfig {
    pub fn to_config_string(&self) -> String {
        format!(
            "n = {}\nalpha = {}\ns = {}\nseed = {}\n",
            self.spec.n, self.spec.alpha, self.spec.s, self.seed
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (mut n, mut alpha, mut s, mut seed) = (None, None, None, 0u64);
        for (key, value) in parse_key_values(text)? {
            match key.as_str() {
                "n" => n = Some(parse_value::<usize>(&key, &value)?),
                "alpha" => alpha = Some(parse_value::<f64>(&key, &value)?),
                "s" => s = Some(parse_value::<f64>(&key, &value)?),
                "seed" => seed = parse_value::<u64>(&key, &value)?,
                other => return Err(Error::Parse(format!("unknown key '{other}'"))),
            }
        }
        let missing = |k: &str| Error::Parse(format!("missing key '{k}'"));
        let spec = VertexSumSpec::new(
            n.ok_or_else(|| missing("n"))?,
            alpha.ok_or_else(|| missing("alpha"))?,
            s.ok_or_else(|| missing("s"))?,
        )?;
        Ok(Self { spec, seed })
    }
}

/// Splits `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::Parse(format!("{key} = '{value}': {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigen, moore_penrose, pseudo_determinant, RANK_CUTOFF};
    use crate::mle::{l_sigma, DenseObjective};
    use proptest::prelude::*;

    fn spec(n: usize, alpha: f64, s: f64) -> VertexSumSpec {
        VertexSumSpec::new(n, alpha, s).unwrap()
    }

    fn ca(labels: &[usize]) -> CommunityAssignment {
        CommunityAssignment::from_one_based(labels, 2).unwrap()
    }

    /// The case table for `Σ`, written independently of `sigma_entry`.
    fn sigma_case(s2: f64, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let a: std::collections::BTreeSet<usize> = [i, j].into();
        let b: std::collections::BTreeSet<usize> = [k, l].into();
        let shared = a.intersection(&b).count();
        if i == j && j == k && k == l {
            4.0 * s2
        } else if shared == 2 {
            2.0 * s2
        } else if shared == 1 && i != j && k != l {
            s2
        } else if shared == 1 {
            2.0 * s2
        } else {
            0.0
        }
    }

    #[test]
    fn sigma_small_entries() {
        let sp = spec(2, 0.5, 1.0);
        let sig = build_sigma(&sp);
        // ((1,1),(1,1)), ((1,2),(1,2)), ((1,2),(2,1)), ((1,1),(2,2))
        assert_eq!(sig.get(0, 0), 4.0);
        assert_eq!(sig.get(1, 1), 2.0);
        assert_eq!(sig.get(1, 2), 2.0);
        assert_eq!(sig.get(0, 3), 0.0);
        let sp = spec(5, 0.6, 0.7);
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    for l in 0..5 {
                        let d = sp.sigma_entry(i, j, k, l) - sigma_case(0.49, i, j, k, l);
                        assert!(d.abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn sigma_spectrum() {
        for n in [2usize, 3, 5] {
            let s = 1.3;
            let sp = spec(n, 0.5, s);
            let f = eigen(&build_sigma(&sp), RANK_CUTOFF);
            let ns2 = n as f64 * s * s;
            assert_eq!(f.rank, n);
            assert!((f.eigenvalues[0] - 4.0 * ns2).abs() < 1e-9 * ns2);
            for v in &f.eigenvalues[1..n] {
                assert!((v - 2.0 * ns2).abs() < 1e-9 * ns2);
            }
            for v in &f.eigenvalues[n..] {
                assert!(v.abs() < 1e-9 * ns2);
            }
            let det = pseudo_determinant(&build_sigma(&sp));
            let expect = 4.0 * ns2 * (2.0 * ns2).powi(n as i32 - 1);
            assert!((det - expect).abs() < 1e-9 * expect);
        }
        // n = 2, s = 1: 8 · 4
        assert!((pseudo_determinant(&build_sigma(&spec(2, 0.5, 1.0))) - 32.0).abs() < 1e-9);
    }

    #[test]
    fn flat_vector_is_top_eigenvector() {
        let n = 4;
        let sp = spec(n, 0.5, 0.9);
        let v = vec![1.0 / n as f64; n * n];
        let sv = build_sigma(&sp).mul_vec(&v);
        let lam = 4.0 * n as f64 * 0.81;
        for (a, b) in sv.iter().zip(&v) {
            assert!((a - lam * b).abs() < 1e-12);
        }
    }

    #[test]
    fn pinv_closed_form_examples() {
        let sp = spec(3, 0.5, 1.0);
        assert!((sp.pinv_entry(0, 1, 2, 2) + 3.0 / 108.0).abs() < 1e-15);
        assert!((sp.pinv_entry(1, 1, 1, 1) - 9.0 / 108.0).abs() < 1e-15);
        assert!((sp.pinv_entry(0, 1, 1, 2) - 0.0).abs() < 1e-15);
        assert!((sp.pinv_entry(0, 1, 1, 0) - 3.0 / 108.0).abs() < 1e-15);
        assert!((sp.pinv_entry(0, 0, 0, 2) - 3.0 / 108.0).abs() < 1e-15);
    }

    #[test]
    fn pinv_matches_numerical() {
        for n in 2..=7 {
            let sp = spec(n, 0.5, 0.8);
            let closed = build_sigma_pinv(&sp);
            let num = moore_penrose(&build_sigma(&sp));
            let scale = closed.max_abs();
            for a in 0..n * n {
                for b in 0..n * n {
                    assert!((closed.get(a, b) - num.get(a, b)).abs() <= 1e-9 * scale, "n={n}");
                }
            }
            let sig = build_sigma(&sp).into_matrix();
            let back = &sig * closed.as_matrix() * &sig;
            assert!((back - &sig).amax() < 1e-9 * sig.amax());
        }
    }

    #[test]
    fn vertex_space_form_matches_dense() {
        let sp = spec(5, 0.6, 1.1);
        let dense = sp.dense_model().unwrap();
        let u = ObservationMatrix::from_fn(5, 5, |i, j| (i * 7 + j * 3) as f64 % 5.0 - 2.0);
        let v = sp.sample_noise(3);
        let a = sp.precision_form(&u, &v);
        let b = dense.precision_form(&u, &v);
        assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        let pa = sp.precision_apply(&u);
        let pb = dense.precision_apply(&u);
        for (x, y) in pa.flat().iter().zip(pb.flat()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn l_closed_examples() {
        let sp = spec(4, 0.5, 1.0);
        let y = sp.truth();
        assert_eq!(l_sigma_assignments(&sp, &y, &y).unwrap(), 0.0);
        for x in [ca(&[1, 2, 1, 2]), ca(&[1, 2, 2, 1]), ca(&[2, 2, 1, 1])] {
            let t = confusion_table(&x, &y).unwrap();
            let b = ABPair::from_table(&t).b;
            let l = l_sigma_closed(&sp, &t).unwrap();
            assert!((l - balanced_quartic(4, 1.0, b)).abs() < 1e-12);
        }
        let bad = ConfusionTable::from_counts(&[vec![3, 0], vec![0, 1]]).unwrap();
        assert!(l_sigma_closed(&sp, &bad).is_err());
    }

    #[test]
    fn l_closed_matches_generic_exhaustively() {
        for (n, alpha) in [(5usize, 0.6), (6, 2.0 / 3.0 - 0.01), (7, 0.58)] {
            let sp = spec(n, alpha, 0.9);
            let dense = sp.dense_model().unwrap();
            let y = sp.truth();
            for idx in 0..(1u32 << n) {
                let labels: Vec<u8> = (0..n).map(|v| ((idx >> (n - 1 - v)) & 1) as u8).collect();
                let x = CommunityAssignment::new(labels, 2).unwrap();
                let closed = l_sigma_assignments(&sp, &x, &y).unwrap();
                let generic = l_sigma(&dense, &x, &y).unwrap();
                let scale = generic.abs().max(1.0 / (n as f64).powi(3));
                assert!((closed - generic).abs() <= 1e-8 * scale, "n={n} x={x}");
                let u = u_decomposition(&sp, &x, &y);
                assert!((u.iter().sum::<f64>() - generic).abs() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn single_move_gap_formulas() {
        let sp = spec(25, 16.0 / 25.0, 1.0);
        let al = 16.0 / 25.0;
        let n = 25.0f64;
        let ls1 = ((2.0 * al - 1.0) * (2.0 * al - 1.0) * n.powi(3)
            - 4.0 * (3.0 * al - 1.0) * (al - 1.0) * n * n
            - 6.0 * (2.0 * al - 1.0) * n
            - 3.0)
            / n.powi(3);
        assert!((single_move_gap(&sp, Direction::TwoToOne).unwrap() - ls1).abs() < 1e-12);

        let y = sp.truth();
        let from2 = single_move(&y, 24);
        let from1 = single_move(&y, 0);
        let dense = sp.dense_model().unwrap();
        let g21 = l_sigma(&dense, &from2, &y).unwrap();
        let g12 = l_sigma(&dense, &from1, &y).unwrap();
        assert!((single_move_gap(&sp, Direction::TwoToOne).unwrap() - g21).abs() < 1e-10);
        assert!((single_move_gap(&sp, Direction::OneToTwo).unwrap() - g12).abs() < 1e-10);
    }

    /// `n · (gap - (2α-1)²)/(2α-1)²` tends to this constant.
    fn first_order(al: f64, dir: Direction) -> f64 {
        let lin = match dir {
            Direction::TwoToOne => 4.0 * (3.0 * al - 1.0) * (1.0 - al),
            Direction::OneToTwo => 4.0 * al * (2.0 - 3.0 * al),
        };
        lin / (2.0 * al - 1.0).powi(2)
    }

    #[test]
    fn single_move_gap_limit() {
        for dir in [Direction::OneToTwo, Direction::TwoToOne] {
            let mut last = f64::INFINITY;
            for n in [50usize, 100, 400, 1600] {
                let sp = spec(n, 0.64, 1.0);
                let al = sp.n1() as f64 / n as f64;
                let lim = (2.0 * al - 1.0).powi(2);
                let dev = (single_move_gap(&sp, dir).unwrap() - lim).abs() / lim;
                assert!(dev <= (first_order(al, dir) + 1.0) / n as f64, "n={n} {dir:?}");
                assert!(dev < last);
                last = dev;
            }
        }
    }

    #[test]
    fn threshold_arithmetic() {
        let n = (8.0f64).exp().round() as usize;
        let t = recovery_threshold(n, 16.0 / 25.0).unwrap();
        let exact = (7.0 / 25.0) / (8.0 * (n as f64).ln()).sqrt();
        assert!((t - exact).abs() < 1e-15);
        // e⁸ itself is not an integer; check the formula at the exact point
        assert!(((7.0 / 25.0) / 64.0f64.sqrt() - 0.035).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for n in 2..200 {
            let t = recovery_threshold(n, 0.6).unwrap();
            assert!(t < last);
            last = t;
        }
        assert!(recovery_threshold(1, 0.6).is_err());
        assert!(recovery_threshold(10, 0.7).is_err());
        let hi = noise_scale(100, 0.6, 0.5, 8.0, NoiseRegime::High).unwrap();
        assert!((hi - 1.5 * recovery_threshold(100, 0.6).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn b_complement_constant_values() {
        let c = b_complement_constant(0.6, 0.1).unwrap();
        assert!((c - 1e-4).abs() < 1e-15);
        assert!(b_complement_constant(0.6, 1e-6).unwrap() < 1e-11);
        assert!(b_complement_constant(0.6, 0.25).is_err());
        assert!(b_complement_constant(0.5, 0.1).is_err());
    }

    #[test]
    fn eta_second_moment_asymptotics() {
        let sp = spec(100, 0.64, 0.5);
        let al = sp.n1() as f64 / 100.0;
        for (a, dir) in [(0usize, Direction::OneToTwo), (99, Direction::TwoToOne)] {
            let m = eta_moments(&sp, a, None).unwrap();
            let ratio = m * (2.0 * al - 1.0).powi(2) / (4.0 * 0.25);
            assert!((ratio - 1.0).abs() <= (first_order(al, dir) + 1.0) / 100.0);
            assert!((m - 4.0 / single_move_gap(&sp, dir).unwrap()).abs() < 1e-9 * m);
        }
    }

    #[test]
    fn eta_cross_moment_is_small() {
        let sp = spec(100, 0.64, 1.0);
        for (a, b) in [(0usize, 1usize), (0, 99), (70, 90), (10, 63)] {
            let c = eta_moments(&sp, a, Some(b)).unwrap();
            assert!(c.abs() * 100.0 <= FROZEN_CROSS_BOUND, "{a},{b}: {c}");
        }
    }

    /// `max |E η_a η_b| · n` measured once at n = 100, α = 0.64, s = 1
    /// (801.0, for two vertices of community 1), then doubled.
    const FROZEN_CROSS_BOUND: f64 = 1600.0;

    #[test]
    fn fast_objective_matches_dense() {
        let sp = spec(6, 0.5, 0.7);
        let dense = sp.dense_model().unwrap();
        let y = sp.truth();
        let k = sp.observe(&y, 12).unwrap();
        let fast = VertexSumObjective::new(&sp, &k).unwrap();
        let slow = DenseObjective::f(&dense, &k).unwrap();
        for idx in 0..64u32 {
            let labels: Vec<u8> = (0..6).map(|v| ((idx >> v) & 1) as u8).collect();
            let x = CommunityAssignment::new(labels, 2).unwrap();
            let (a, b) = (fast.eval(&x), slow.eval(&x));
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn noise_covariance_of_sharing_entries() {
        // Cov[W_{1,2}, W_{1,3}] = s² over 1e5 draws, 3σ tolerance
        let sp = spec(4, 0.5, 1.0);
        let mut rng = rng_from_seed(99);
        let trials = 100_000;
        let mut prods = Vec::with_capacity(trials);
        for _ in 0..trials {
            let w = sp.sample_noise_with(&mut rng);
            prods.push(w.get(0, 1) * w.get(0, 2));
        }
        let mean = prods.iter().sum::<f64>() / trials as f64;
        let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn config_roundtrip() {
        let c = VertexSumConfig { spec: spec(12, 0.64, 0.05), seed: 7 };
        let text = c.to_config_string();
        assert_eq!(VertexSumConfig::parse(&text).unwrap(), c);
        assert!(VertexSumConfig::parse("n = 3\nalpha = 0.6\n").is_err());
        assert!(VertexSumConfig::parse("n = 3\nalpha = 0.6\ns = 1\nbogus = 1\n").is_err());
        assert!(VertexSumConfig::parse("# comment\nn=3\nalpha=0.6\ns=1 # trailing\n").is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn numerator_is_nonnegative_and_zero_only_on_class(
            n in 4usize..40,
            t11f in 0.0f64..=1.0,
            t22f in 0.0f64..=1.0,
        ) {
            let sp = spec(n, 0.6, 1.0);
            let (n1, n2) = (sp.n1(), sp.n2());
            let t11 = (t11f * n1 as f64).round() as usize;
            let t22 = (t22f * n2 as f64).round() as usize;
            let t = ConfusionTable::from_counts(&[vec![t11, n2 - t22], vec![n1 - t11, t22]]).unwrap();
            let num = l_sigma_numerator(&sp, &t).unwrap();
            prop_assert!(num >= 0);
            let identity = t11 == n1 && t22 == n2;
            let swap = t11 == 0 && t22 == 0;
            if n1 != n2 {
                prop_assert_eq!(num == 0, identity || swap);
            }
        }
    }
}
