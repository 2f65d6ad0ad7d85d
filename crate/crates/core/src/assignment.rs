//! Community assignments `x: [n] → [k]`, confusion tables, equivalence
//! classes, the table sets `B` and `B_ε`, and the path that turns one
//! assignment into another one vertex at a time.
//!
//! Labels are stored 0-based. Anything read from or written to text uses
//! 1-based labels.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::Theta;

/// Largest supported number of communities.
pub const MAX_COMMUNITIES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CommunityAssignment {
    labels: Vec<u8>,
    k: usize,
}

impl CommunityAssignment {
    /// Builds an assignment from 0-based labels.
    pub fn new(labels: Vec<u8>, k: usize) -> Result<Self> {
        if k == 0 || k > MAX_COMMUNITIES {
            return Err(Error::InvalidParameter(format!(
                "k = {k} outside 1..={MAX_COMMUNITIES}"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= k) {
            return Err(Error::InvalidLabel { label: bad as usize + 1, k });
        }
        Ok(Self { labels, k })
    }

    pub fn from_zero_based(labels: &[usize], k: usize) -> Result<Self> {
        let mut out = Vec::with_capacity(labels.len());
        for &l in labels {
            if l >= k {
                return Err(Error::InvalidLabel { label: l + 1, k });
            }
            out.push(l as u8);
        }
        Self::new(out, k)
    }

    pub fn from_one_based(labels: &[usize], k: usize) -> Result<Self> {
        let mut out = Vec::with_capacity(labels.len());
        for &l in labels {
            if l == 0 || l > k {
                return Err(Error::InvalidLabel { label: l, k });
            }
            out.push((l - 1) as u8);
        }
        Self::new(out, k)
    }

    /// The first `sizes[0]` vertices in community 0, the next `sizes[1]` in
    /// community 1, and so on.
    pub fn blocks(sizes: &[usize]) -> Result<Self> {
        let mut labels = Vec::new();
        for (a, &s) in sizes.iter().enumerate() {
            labels.extend(std::iter::repeat_n(a as u8, s));
        }
        Self::new(labels, sizes.len())
    }

    pub(crate) fn from_raw_unchecked(labels: Vec<u8>, k: usize) -> Self {
        debug_assert!(labels.iter().all(|&l| (l as usize) < k));
        Self { labels, k }
    }

    pub(crate) fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn label(&self, v: usize) -> usize {
        self.labels[v] as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l as usize + 1).collect()
    }

    pub fn community_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Members of community `a`, in increasing vertex order.
    pub fn members(&self, a: usize) -> Vec<usize> {
        (0..self.n()).filter(|&v| self.label(v) == a).collect()
    }

    /// A copy with vertex `v` moved to community `a`.
    pub fn with_label(&self, v: usize, a: usize) -> Self {
        assert!(a < self.k, "label out of range");
        let mut labels = self.labels.clone();
        labels[v] = a as u8;
        Self { labels, k: self.k }
    }

    /// A copy with the labels of vertices `u` and `v` exchanged.
    pub fn swapped(&self, u: usize, v: usize) -> Self {
        let mut labels = self.labels.clone();
        labels.swap(u, v);
        Self { labels, k: self.k }
    }

    /// `η ∘ x`.
    pub fn relabel(&self, eta: &Permutation) -> Self {
        assert_eq!(eta.k(), self.k, "permutation size");
        let labels = self.labels.iter().map(|&l| eta.apply(l as usize) as u8).collect();
        Self { labels, k: self.k }
    }

    /// True when `self` and `other` induce the same partition of the vertices.
    pub fn same_partition(&self, other: &Self) -> bool {
        partition_map(other, self).is_some()
    }

    /// One CSV row of 1-based labels.
    pub fn to_csv_row(&self) -> String {
        self.to_one_based()
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_csv_row(row: &str, k: usize) -> Result<Self> {
        let labels = row
            .trim()
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("label '{}': {e}", s.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_one_based(&labels, k)
    }
}

impl fmt::Display for CommunityAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.to_csv_row())
    }
}

fn check_pair(x: &CommunityAssignment, z: &CommunityAssignment) -> Result<()> {
    if x.n() != z.n() || x.k() != z.k() {
        return Err(Error::DimensionMismatch(format!(
            "assignments (n={}, k={}) and (n={}, k={})",
            x.n(),
            x.k(),
            z.n(),
            z.k()
        )));
    }
    Ok(())
}

/// `t[i][j] = |x⁻¹(i) ∩ z⁻¹(j)|`, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConfusionTable {
    k: usize,
    counts: Vec<usize>,
}

impl ConfusionTable {
    pub fn from_counts(rows: &[Vec<usize>]) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("confusion table must be k x k".into()));
        }
        Ok(Self { k, counts: rows.concat() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.counts.iter().sum()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> usize {
        self.counts[i * self.k + j]
    }

    pub fn row_sums(&self) -> Vec<usize> {
        (0..self.k).map(|i| (0..self.k).map(|j| self.get(i, j)).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        (0..self.k).map(|j| (0..self.k).map(|i| self.get(i, j)).sum()).collect()
    }

    pub fn trace(&self) -> usize {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<usize>> {
        self.counts.chunks(self.k).map(<[usize]>::to_vec).collect()
    }

    /// For each column `i`, the row holding its maximum (smallest row on ties).
    pub fn column_argmax(&self) -> Vec<usize> {
        (0..self.k)
            .map(|i| {
                let mut best = 0;
                for j in 1..self.k {
                    if self.get(j, i) > self.get(best, i) {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

pub fn confusion_table(x: &CommunityAssignment, z: &CommunityAssignment) -> Result<ConfusionTable> {
    check_pair(x, z)?;
    let k = x.k();
    let mut counts = vec![0; k * k];
    for (&a, &b) in x.labels.iter().zip(&z.labels) {
        counts[a as usize * k + b as usize] += 1;
    }
    Ok(ConfusionTable { k, counts })
}

/// `D_Ω(x, z) = Σ_{i≠j} t_{i,j}(x, z)`, the number of vertices whose labels differ.
pub fn distance(x: &CommunityAssignment, z: &CommunityAssignment) -> Result<usize> {
    check_pair(x, z)?;
    Ok(x.labels.iter().zip(&z.labels).filter(|(a, b)| a != b).count())
}

/// A bijection on the `k` community labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let k = map.len();
        let mut seen = vec![false; k];
        for &m in &map {
            if m >= k || seen[m] {
                return Err(Error::InvalidParameter(format!("{map:?} is not a bijection")));
            }
            seen[m] = true;
        }
        Ok(Self { map })
    }

    pub fn identity(k: usize) -> Self {
        Self { map: (0..k).collect() }
    }

    pub fn k(&self) -> usize {
        self.map.len()
    }

    #[inline]
    pub fn apply(&self, a: usize) -> usize {
        self.map[a]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &m)| i == m)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.k()];
        for (i, &m) in self.map.iter().enumerate() {
            inv[m] = i;
        }
        Self { map: inv }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self { map: other.map.iter().map(|&m| self.map[m]).collect() }
    }

    /// `θ(x, i, a) = θ(η∘x, i, η(a))` for every coordinate `i < p` and label
    /// `a`, evaluated at the given reference assignment `x`.
    pub fn is_theta_preserving(&self, theta: &dyn Theta, reference: &CommunityAssignment, p: usize) -> bool {
        let moved = reference.relabel(self);
        (0..self.k()).all(|a| {
            (0..p).all(|i| theta.value(reference, i, a) == theta.value(&moved, i, self.apply(a)))
        })
    }
}

/// The bijection `η` with `x = η ∘ z` when `x` and `z` induce the same
/// partition. Labels unused by `z` are matched to labels unused by `x` in
/// increasing order.
fn partition_map(x: &CommunityAssignment, z: &CommunityAssignment) -> Option<Permutation> {
    if x.n() != z.n() || x.k() != z.k() {
        return None;
    }
    let k = x.k();
    let mut fwd = vec![usize::MAX; k];
    let mut back = vec![usize::MAX; k];
    for (&a, &b) in x.labels.iter().zip(&z.labels) {
        let (a, b) = (a as usize, b as usize);
        if fwd[b] == usize::MAX && back[a] == usize::MAX {
            fwd[b] = a;
            back[a] = b;
        } else if fwd[b] != a || back[a] != b {
            return None;
        }
    }
    let mut free = (0..k).filter(|&a| back[a] == usize::MAX);
    for slot in fwd.iter_mut().filter(|s| **s == usize::MAX) {
        *slot = free.next()?;
    }
    Some(Permutation { map: fwd })
}

/// Whether `x ∈ C(z)`: `x` and `z` induce the same partition and
/// `θ(x, i, x(j)) = θ(z, i, z(j))` for every coordinate `i < p` and vertex
/// `j`. Returns the witnessing `η` with `x = η ∘ z`.
pub fn is_equivalent(
    x: &CommunityAssignment,
    z: &CommunityAssignment,
    theta: &dyn Theta,
    p: usize,
) -> Option<Permutation> {
    let eta = partition_map(x, z)?;
    for j in 0..x.n() {
        let (a, b) = (x.label(j), z.label(j));
        for i in 0..p {
            if theta.value(x, i, a) != theta.value(z, i, b) {
                return None;
            }
        }
    }
    Some(eta)
}

/// Membership in `B`: the column sums of `t` equal `sizes`.
pub fn in_b(t: &ConfusionTable, sizes: &[usize]) -> bool {
    t.col_sums() == sizes
}

/// The argmax map `w` of `t` when `t ∈ B_ε`, where the column sums of `t`
/// play the role of the community sizes `n_i`.
///
/// Condition (3) is checked by evaluating `θ` at `reference`, normally the
/// true assignment.
pub fn b_epsilon_map(
    t: &ConfusionTable,
    epsilon: f64,
    theta: &dyn Theta,
    reference: &CommunityAssignment,
    p: usize,
) -> Option<Permutation> {
    let n = t.n() as f64;
    let cols = t.col_sums();
    let w = t.column_argmax();
    for (i, &row) in w.iter().enumerate() {
        if (t.get(row, i) as f64) < cols[i] as f64 - n * epsilon {
            return None;
        }
    }
    let w = Permutation::new(w).ok()?;
    w.is_theta_preserving(theta, reference, p).then_some(w)
}

pub fn in_b_epsilon(
    t: &ConfusionTable,
    epsilon: f64,
    theta: &dyn Theta,
    reference: &CommunityAssignment,
    p: usize,
) -> bool {
    b_epsilon_map(t, epsilon, theta, reference, p).is_some()
}

/// The sequence `y_0 = y_star, y_1, …, y_h = x`. Each step takes the least
/// `(j, i)` with `j ≠ i` and `t_{j,i}(x, y_r) > 0`, and moves the smallest
/// vertex of `x⁻¹(j) ∩ y_r⁻¹(i)` to community `j`.
pub fn assignment_path(x: &CommunityAssignment, y_star: &CommunityAssignment) -> Result<Vec<CommunityAssignment>> {
    check_pair(x, y_star)?;
    let k = x.k();
    let mut path = vec![y_star.clone()];
    let mut cur = y_star.clone();
    loop {
        let t = confusion_table(x, &cur)?;
        let next = (0..k)
            .flat_map(|j| (0..k).map(move |i| (j, i)))
            .find(|&(j, i)| j != i && t.get(j, i) > 0);
        let Some((j, i)) = next else { break };
        let u = (0..x.n())
            .find(|&v| x.label(v) == j && cur.label(v) == i)
            .expect("nonzero count has a vertex");
        cur = cur.with_label(u, j);
        path.push(cur.clone());
    }
    Ok(path)
}
