//! Objectives and exact maximum-likelihood estimation by enumeration.
//!
//! The log-likelihood of `x` given `K` is, up to an `x`-independent constant,
//! `-G_Σ(x)/2` with `G_Σ(x) = (K - A_x)ᵗ Σ† (K - A_x)`. Dropping the term
//! `Kᵗ Σ† K` leaves `f(x) = A_xᵗ Σ† A_x - 2 A_xᵗ Σ† K`, which is what the
//! solvers minimize by default.
//!
//! Candidates are visited in lexicographic order of their label sequences.
//! The reported minimizer is the lexicographically smallest assignment whose
//! objective lies within a relative tolerance of the minimum; `tied` is set
//! when that tolerance band holds more than one equivalence class.

use rayon::prelude::*;

use crate::assignment::CommunityAssignment;
use crate::error::{Error, Result};
use crate::model::{ObservationMatrix, SignalModel};

pub const DEFAULT_BUDGET: u64 = 1 << 24;
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-12;

/// Near-minimal candidates retained per reduction before the list is cut.
const KEEP_CAP: usize = 64;
const CHUNK: u64 = 1 << 12;

/// `G_Σ(x) = (K - A_x)ᵗ Σ† (K - A_x)`.
pub fn g_objective<M: SignalModel + ?Sized>(
    model: &M,
    x: &CommunityAssignment,
    k_obs: &ObservationMatrix,
) -> Result<f64> {
    model.check_assignment(x)?;
    let r = k_obs.try_sub(&model.signal(x))?;
    Ok(model.precision_form(&r, &r))
}

/// `f(x) = A_xᵗ Σ† A_x - 2 A_xᵗ Σ† K`.
pub fn f_objective<M: SignalModel + ?Sized>(
    model: &M,
    x: &CommunityAssignment,
    k_obs: &ObservationMatrix,
) -> Result<f64> {
    model.check_assignment(x)?;
    let a = model.signal(x);
    if !a.same_shape(k_obs) {
        return Err(Error::DimensionMismatch("observation shape".into()));
    }
    Ok(model.precision_form(&a, &a) - 2.0 * model.precision_form(&a, k_obs))
}

/// `L_Σ(x, y) = (A_x - A_y)ᵗ Σ† (A_x - A_y)`.
pub fn l_sigma<M: SignalModel + ?Sized>(
    model: &M,
    x: &CommunityAssignment,
    y: &CommunityAssignment,
) -> Result<f64> {
    model.check_assignment(x)?;
    model.check_assignment(y)?;
    let d = model.signal(x).try_sub(&model.signal(y))?;
    Ok(model.precision_form(&d, &d))
}

/// Mean and variance of `f(x) - f(y)` when `y` generated the observation:
/// `(L_Σ, 4 L_Σ)`.
pub fn gap_statistics<M: SignalModel + ?Sized>(
    model: &M,
    x: &CommunityAssignment,
    y: &CommunityAssignment,
) -> Result<(f64, f64)> {
    let l = l_sigma(model, x, y)?;
    Ok((l, 4.0 * l))
}

/// Anything the enumeration solvers can minimize.
pub trait Objective: Sync {
    fn vertices(&self) -> usize;
    fn communities(&self) -> usize;
    fn eval(&self, x: &CommunityAssignment) -> f64;
    fn equivalent(&self, x: &CommunityAssignment, z: &CommunityAssignment) -> bool;

    /// Enables the search to visit one representative per partition.
    fn label_symmetric(&self) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// `f(x)`.
    F,
    /// `G_Σ(x)`.
    G,
}

/// Evaluates `f` or `G_Σ` through [`SignalModel::precision_form`].
pub struct DenseObjective<'a, M: SignalModel + ?Sized> {
    model: &'a M,
    kind: ObjectiveKind,
    k_obs: &'a ObservationMatrix,
    precision_k: ObservationMatrix,
}

impl<'a, M: SignalModel + ?Sized> DenseObjective<'a, M> {
    pub fn new(model: &'a M, kind: ObjectiveKind, k_obs: &'a ObservationMatrix) -> Result<Self> {
        if k_obs.rows() != model.coords() || k_obs.cols() != model.vertices() {
            return Err(Error::DimensionMismatch(format!(
                "observation {}x{} against model {}x{}",
                k_obs.rows(),
                k_obs.cols(),
                model.coords(),
                model.vertices()
            )));
        }
        let precision_k = model.precision_apply(k_obs);
        Ok(Self { model, kind, k_obs, precision_k })
    }

    pub fn f(model: &'a M, k_obs: &'a ObservationMatrix) -> Result<Self> {
        Self::new(model, ObjectiveKind::F, k_obs)
    }

    pub fn g(model: &'a M, k_obs: &'a ObservationMatrix) -> Result<Self> {
        Self::new(model, ObjectiveKind::G, k_obs)
    }
}

impl<M: SignalModel + ?Sized> Objective for DenseObjective<'_, M> {
    fn vertices(&self) -> usize {
        self.model.vertices()
    }

    fn communities(&self) -> usize {
        self.model.communities()
    }

    fn eval(&self, x: &CommunityAssignment) -> f64 {
        let a = self.model.signal(x);
        match self.kind {
            ObjectiveKind::F => self.model.precision_form(&a, &a) - 2.0 * a.dot(&self.precision_k),
            ObjectiveKind::G => {
                let r = self.k_obs.try_sub(&a).expect("shape checked at construction");
                self.model.precision_form(&r, &r)
            }
        }
    }

    fn equivalent(&self, x: &CommunityAssignment, z: &CommunityAssignment) -> bool {
        self.model.equivalent(x, z)
    }

    fn label_symmetric(&self) -> bool {
        self.model.label_symmetric()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Maximum number of candidates the search may visit.
    pub budget: u64,
    /// Relative tie tolerance: values within `tol · max(1, |min|)` of the
    /// minimum count as minimal.
    pub tie_tolerance: f64,
    /// Visit one assignment per partition when the objective is label-symmetric.
    pub use_symmetry: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { budget: DEFAULT_BUDGET, tie_tolerance: DEFAULT_TIE_TOLERANCE, use_symmetry: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub minimizer: CommunityAssignment,
    pub objective: f64,
    /// More than one equivalence class attains the minimum within tolerance.
    pub tied: bool,
    /// Number of equivalence classes found within tolerance (a lower bound
    /// when the retained list overflowed).
    pub minimal_classes: usize,
    /// Set by [`MleResult::mark_truth`].
    pub equivalence_class_hit: bool,
    pub candidates_evaluated: u64,
}

impl MleResult {
    /// Records whether the minimizer lies in the class of `truth`.
    pub fn mark_truth<O: Objective + ?Sized>(&mut self, objective: &O, truth: &CommunityAssignment) {
        self.equivalence_class_hit = objective.equivalent(&self.minimizer, truth);
    }

    /// Exact recovery: the class was hit and the minimum was not tied, or
    /// ties are accepted.
    pub fn recovered(&self, count_ties: bool) -> bool {
        self.equivalence_class_hit && (count_ties || !self.tied)
    }
}

/// Running minimum plus every candidate close enough to it to matter.
struct Tracker {
    best: f64,
    kept: Vec<(Vec<u8>, f64)>,
    evaluated: u64,
    /// Smallest value among candidates dropped by [`Tracker::compact`].
    dropped_min: f64,
    tol: f64,
}

impl Tracker {
    fn new(tol: f64) -> Self {
        Self { best: f64::INFINITY, kept: Vec::new(), evaluated: 0, dropped_min: f64::INFINITY, tol }
    }

    fn band(&self, at: f64) -> f64 {
        self.tol * at.abs().max(1.0)
    }

    fn offer(&mut self, labels: &[u8], value: f64) {
        self.evaluated += 1;
        // keep a doubled band so that no merge order can lose a candidate
        if value > self.best + 2.0 * self.band(self.best) {
            return;
        }
        if value < self.best {
            self.best = value;
            let cut = self.best + 2.0 * self.band(self.best);
            self.kept.retain(|(_, v)| *v <= cut);
        }
        self.kept.push((labels.to_vec(), value));
        if self.kept.len() > 4 * KEEP_CAP {
            self.compact();
        }
    }

    fn compact(&mut self) {
        self.kept.sort_by(|a, b| a.0.cmp(&b.0));
        if self.kept.len() > KEEP_CAP {
            let dropped = self.kept.split_off(KEEP_CAP);
            self.dropped_min = dropped.iter().map(|c| c.1).fold(self.dropped_min, f64::min);
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.evaluated += other.evaluated;
        self.dropped_min = self.dropped_min.min(other.dropped_min);
        self.best = self.best.min(other.best);
        let cut = self.best + 2.0 * self.band(self.best);
        self.kept.extend(other.kept);
        self.kept.retain(|(_, v)| *v <= cut);
        if self.kept.len() > 4 * KEEP_CAP {
            self.compact();
        }
        self
    }

    fn finish<O: Objective + ?Sized>(mut self, obj: &O) -> Result<MleResult> {
        if self.kept.is_empty() {
            return Err(Error::InvalidSizes("no assignment satisfies the size constraints".into()));
        }
        let cut = self.best + self.band(self.best);
        let overflow = self.dropped_min <= cut;
        self.kept.retain(|(_, v)| *v <= cut);
        self.kept.sort_by(|a, b| a.0.cmp(&b.0));
        let k = obj.communities();
        let mut reps: Vec<(CommunityAssignment, f64)> = Vec::new();
        for (labels, v) in self.kept {
            let x = CommunityAssignment::from_raw_unchecked(labels, k);
            if !reps.iter().any(|(r, _)| obj.equivalent(r, &x)) {
                reps.push((x, v));
            }
        }
        let classes = reps.len();
        let (minimizer, objective) = reps.swap_remove(0);
        Ok(MleResult {
            minimizer,
            objective,
            tied: classes > 1 || overflow,
            minimal_classes: classes,
            equivalence_class_hit: false,
            candidates_evaluated: self.evaluated,
        })
    }
}

fn check_budget(required: f64, budget: u64) -> Result<()> {
    if required > budget as f64 {
        Err(Error::BudgetExceeded { required, budget })
    } else {
        Ok(())
    }
}

/// `x ↦` the first-appearance relabeling is the identity.
fn is_restricted_growth(labels: &[u8]) -> bool {
    let mut next = 0u8;
    for &l in labels {
        if l > next {
            return false;
        }
        if l == next {
            next += 1;
        }
    }
    true
}

/// `ŷ` over `Ω_c` with the default dense objective `f`.
pub fn solve_unknown_sizes<M: SignalModel + ?Sized>(
    model: &M,
    k_obs: &ObservationMatrix,
    c_min: f64,
) -> Result<MleResult> {
    let obj = DenseObjective::f(model, k_obs)?;
    solve_unknown_sizes_with(&obj, c_min, &SolverOptions::default())
}

/// Global minimum of `obj` over all assignments whose communities each hold
/// at least a fraction `c_min` of the vertices (`c_min = 0` searches all of `Ω`).
pub fn solve_unknown_sizes_with<O: Objective + ?Sized>(
    obj: &O,
    c_min: f64,
    opts: &SolverOptions,
) -> Result<MleResult> {
    if !(0.0..=1.0).contains(&c_min) {
        return Err(Error::InvalidParameter(format!("c_min = {c_min} outside [0, 1]")));
    }
    let n = obj.vertices();
    let k = obj.communities();
    let prune = opts.use_symmetry && obj.label_symmetric();
    let free = if prune { n.saturating_sub(1) } else { n };
    check_budget((k as f64).powi(free as i32), opts.budget)?;
    let total = (k as u64).pow(free as u32);
    let min_size = (c_min * n as f64 - 1e-9).ceil().max(0.0) as usize;
    let chunks = total.div_ceil(CHUNK);

    let tracker = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(total);
            let mut t = Tracker::new(opts.tie_tolerance);
            // the last vertex is the least significant digit
            let mut x = CommunityAssignment::from_raw_unchecked(vec![0u8; n], k);
            let mut rem = start;
            for slot in x.labels_mut().iter_mut().rev().take(free) {
                *slot = (rem % k as u64) as u8;
                rem /= k as u64;
            }
            let mut sizes = vec![0usize; k];
            for _ in start..end {
                if !prune || is_restricted_growth(x.labels()) {
                    sizes.iter_mut().for_each(|s| *s = 0);
                    for &l in x.labels() {
                        sizes[l as usize] += 1;
                    }
                    if sizes.iter().all(|&s| s >= min_size) {
                        let v = obj.eval(&x);
                        t.offer(x.labels(), v);
                    }
                }
                for slot in x.labels_mut().iter_mut().rev().take(free) {
                    *slot += 1;
                    if (*slot as usize) < k {
                        break;
                    }
                    *slot = 0;
                }
            }
            t
        })
        .reduce(|| Tracker::new(opts.tie_tolerance), Tracker::merge);
    tracker.finish(obj)
}

/// `y̌` over `Ω_{n₁,…,n_k}` with the default dense objective `f`.
pub fn solve_known_sizes<M: SignalModel + ?Sized>(
    model: &M,
    k_obs: &ObservationMatrix,
    sizes: &[usize],
) -> Result<MleResult> {
    let obj = DenseObjective::f(model, k_obs)?;
    solve_known_sizes_with(&obj, sizes, &SolverOptions::default())
}

/// `n! / (n₁! ⋯ n_k!)` as a float.
pub fn multinomial(sizes: &[usize]) -> f64 {
    let mut acc = 1.0f64;
    let mut total = 0usize;
    for &s in sizes {
        for i in 1..=s {
            total += 1;
            acc = acc * total as f64 / i as f64;
        }
    }
    acc
}

/// Global minimum of `obj` over assignments with exactly `sizes[a]` vertices
/// in community `a`. Every such assignment is visited; no symmetry reduction
/// is applied because relabelings change the sizes.
pub fn solve_known_sizes_with<O: Objective + ?Sized>(
    obj: &O,
    sizes: &[usize],
    opts: &SolverOptions,
) -> Result<MleResult> {
    let n = obj.vertices();
    let k = obj.communities();
    if sizes.len() != k {
        return Err(Error::InvalidSizes(format!("{} sizes for k = {k}", sizes.len())));
    }
    if sizes.iter().sum::<usize>() != n {
        return Err(Error::InvalidSizes(format!("{sizes:?} does not sum to n = {n}")));
    }
    check_budget(multinomial(sizes), opts.budget)?;

    let depth = n.min(4);
    let mut prefixes = Vec::new();
    let mut prefix = Vec::with_capacity(depth);
    let mut left = sizes.to_vec();
    collect_prefixes(depth, &mut prefix, &mut left, &mut prefixes);

    let tracker = prefixes
        .into_par_iter()
        .map(|prefix| {
            let mut t = Tracker::new(opts.tie_tolerance);
            let mut left = sizes.to_vec();
            for &l in &prefix {
                left[l as usize] -= 1;
            }
            let mut labels = prefix;
            for (a, &c) in left.iter().enumerate() {
                labels.extend(std::iter::repeat_n(a as u8, c));
            }
            let mut x = CommunityAssignment::from_raw_unchecked(labels, k);
            loop {
                let v = obj.eval(&x);
                t.offer(x.labels(), v);
                if !next_permutation(&mut x.labels_mut()[depth..]) {
                    break;
                }
            }
            t
        })
        .reduce(|| Tracker::new(opts.tie_tolerance), Tracker::merge);
    tracker.finish(obj)
}

fn collect_prefixes(depth: usize, prefix: &mut Vec<u8>, left: &mut [usize], out: &mut Vec<Vec<u8>>) {
    if prefix.len() == depth {
        out.push(prefix.clone());
        return;
    }
    for a in 0..left.len() {
        if left[a] > 0 {
            left[a] -= 1;
            prefix.push(a as u8);
            collect_prefixes(depth, prefix, left, out);
            prefix.pop();
            left[a] += 1;
        }
    }
}

/// Advances to the next lexicographic permutation of a multiset; returns
/// false (leaving the slice unchanged) at the last one.
fn next_permutation(s: &mut [u8]) -> bool {
    if s.len() < 2 {
        return false;
    }
    let mut i = s.len() - 1;
    while i > 0 && s[i - 1] >= s[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = s.len() - 1;
    while s[j] <= s[i - 1] {
        j -= 1;
    }
    s.swap(i - 1, j);
    s[i..].reverse();
    true
}
