use std::collections::BTreeMap;

use super::Kernel;
use crate::comb::{distinct_permutations, factorial, is_strict, multiplicity_factor};
use crate::error::{input, Result};

/// Coefficient table on arbitrary ordered index tuples.
///
/// Holds intermediate results such as `f ⊗_r g` before symmetrisation; no
/// symmetry or off-diagonal support is assumed. An order-zero table holds a
/// single scalar under the empty key.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    order: usize,
    dim: usize,
    entries: BTreeMap<Vec<usize>, f64>,
}

impl RawTable {
    pub fn new(order: usize, dim: usize) -> Self {
        Self {
            order,
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn scalar(c: f64, dim: usize) -> Self {
        let mut t = Self::new(0, dim);
        t.entries.insert(Vec::new(), c);
        t
    }

    pub fn from_entries<I>(order: usize, dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, f64)>,
    {
        let mut t = Self::new(order, dim);
        for (k, v) in entries {
            t.check(&k)?;
            *t.entries.entry(k).or_insert(0.0) += v;
        }
        Ok(t)
    }

    /// Every ordered tuple of a kernel's symmetric extension.
    pub fn from_kernel(f: &Kernel) -> Self {
        let mut t = Self::new(f.order(), f.dim());
        for (key, v) in f.iter() {
            for perm in distinct_permutations(key) {
                t.entries.insert(perm, v);
            }
        }
        t
    }

    fn check(&self, idx: &[usize]) -> Result<()> {
        if idx.len() != self.order {
            return input(format!("tuple {idx:?} does not match table order {}", self.order));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.dim) {
            return input(format!("index {bad} outside 0..{}", self.dim));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        self.entries.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value_at(&self, idx: &[usize]) -> Result<f64> {
        self.check(idx)?;
        Ok(self.entries.get(idx).copied().unwrap_or(0.0))
    }

    #[cfg(test)]
    pub(crate) fn add(&mut self, key: Vec<usize>, v: f64) {
        *self.entries.entry(key).or_insert(0.0) += v;
    }

    /// Value of an order-zero table.
    pub fn as_scalar(&self) -> Option<f64> {
        (self.order == 0).then(|| self.entries.get(&Vec::new()).copied().unwrap_or(0.0))
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.values().map(|v| v * v).sum()
    }

    pub fn inner(&self, other: &RawTable) -> Result<f64> {
        if self.order != other.order {
            return input("inner product of tables with different orders");
        }
        Ok(self
            .entries
            .iter()
            .filter_map(|(k, v)| other.entries.get(k).map(|w| v * w))
            .sum())
    }

    /// Canonical symmetrisation: the average over all permutations of the arguments.
    pub fn symmetrize(&self) -> RawTable {
        SymTable::from_raw(self).to_raw()
    }

    /// Restriction to tuples with pairwise distinct indices.
    pub fn restrict_offdiag(&self) -> RawTable {
        let mut out = RawTable::new(self.order, self.dim);
        for (k, v) in &self.entries {
            let mut s = k.clone();
            s.sort_unstable();
            if is_strict(&s) {
                out.entries.insert(k.clone(), *v);
            }
        }
        out
    }

    /// Largest `|t(i) - t(sigma i)|` over stored tuples and their rearrangements.
    pub fn symmetry_defect(&self) -> f64 {
        let mut m: f64 = 0.0;
        for (k, v) in &self.entries {
            for p in distinct_permutations(k) {
                m = m.max((v - self.entries.get(&p).copied().unwrap_or(0.0)).abs());
            }
        }
        m
    }

    pub fn max_abs_diff(&self, other: &RawTable) -> f64 {
        let mut m: f64 = 0.0;
        for (k, v) in &self.entries {
            m = m.max((v - other.entries.get(k).copied().unwrap_or(0.0)).abs());
        }
        for (k, v) in &other.entries {
            if !self.entries.contains_key(k) {
                m = m.max(v.abs());
            }
        }
        m
    }
}

/// Symmetric table stored once per multiset of indices (nondecreasing keys).
///
/// The represented function takes the stored value on every rearrangement of
/// a key. Keys with repeated indices are allowed; they form the diagonal part.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTable {
    order: usize,
    dim: usize,
    entries: BTreeMap<Vec<usize>, f64>,
}

impl SymTable {
    pub fn new(order: usize, dim: usize) -> Self {
        Self {
            order,
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub(crate) fn from_sorted_map(order: usize, dim: usize, entries: BTreeMap<Vec<usize>, f64>) -> Self {
        Self { order, dim, entries }
    }

    /// Symmetrisation of an arbitrary table.
    pub fn from_raw(t: &RawTable) -> Self {
        let m = t.order();
        let mut sums: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (k, v) in t.iter() {
            let mut s = k.to_vec();
            s.sort_unstable();
            *sums.entry(s).or_insert(0.0) += v;
        }
        let mf = factorial(m);
        for (k, v) in sums.iter_mut() {
            *v *= multiplicity_factor(k) / mf;
        }
        Self::from_sorted_map(m, t.dim(), sums)
    }

    pub fn from_kernel(f: &Kernel) -> Self {
        Self::from_sorted_map(
            f.order(),
            f.dim(),
            f.iter().map(|(k, v)| (k.to_vec(), v)).collect(),
        )
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        self.entries.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    pub fn value_at(&self, idx: &[usize]) -> Result<f64> {
        if idx.len() != self.order {
            return input("tuple length does not match table order");
        }
        let mut s = idx.to_vec();
        s.sort_unstable();
        Ok(self.entries.get(&s).copied().unwrap_or(0.0))
    }

    /// Expansion to every ordered tuple.
    pub fn to_raw(&self) -> RawTable {
        let mut t = RawTable::new(self.order, self.dim);
        for (k, v) in &self.entries {
            for p in distinct_permutations(k) {
                t.entries.insert(p, *v);
            }
        }
        t
    }

    /// Number of ordered tuples that are rearrangements of `key`.
    fn orbit(&self, key: &[usize]) -> f64 {
        factorial(self.order) / multiplicity_factor(key)
    }

    /// Squared norm over ordered tuples.
    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|(k, v)| self.orbit(k) * v * v).sum()
    }

    pub fn inner(&self, other: &SymTable) -> Result<f64> {
        if self.order != other.order {
            return input("inner product of tables with different orders");
        }
        Ok(self
            .entries
            .iter()
            .filter_map(|(k, v)| other.entries.get(k).map(|w| self.orbit(k) * v * w))
            .sum())
    }

    /// Squared norm of the restriction to tuples with a repeated index.
    pub fn diag_norm_sq(&self) -> f64 {
        self.entries
            .iter()
            .filter(|(k, _)| !is_strict(k))
            .map(|(k, v)| self.orbit(k) * v * v)
            .sum()
    }

    /// `<self, other * 1_{diagonal}>`.
    pub fn diag_inner(&self, other: &SymTable) -> f64 {
        self.entries
            .iter()
            .filter(|(k, _)| !is_strict(k))
            .filter_map(|(k, v)| other.entries.get(k).map(|w| self.orbit(k) * v * w))
            .sum()
    }

    /// Restriction to pairwise distinct tuples, as a kernel. Order-zero tables
    /// have no kernel form and yield `None`.
    pub fn offdiag_kernel(&self) -> Option<Kernel> {
        if self.order == 0 {
            return None;
        }
        let entries = self
            .entries
            .iter()
            .filter(|(k, v)| is_strict(k) && **v != 0.0)
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        Some(Kernel::from_sorted_map(self.order, self.dim, entries))
    }

    /// Scalar value of an order-zero table.
    pub fn as_scalar(&self) -> Option<f64> {
        (self.order == 0).then(|| self.entries.get(&Vec::new()).copied().unwrap_or(0.0))
    }
}

/// Table symmetric within each of two argument blocks and off-diagonal inside
/// each block, keyed by `(left set, right set)`. This is the natural shape of
/// the contraction `f ⊗_r g` of two symmetric off-diagonal kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTable {
    left: usize,
    right: usize,
    dim: usize,
    entries: BTreeMap<(Vec<usize>, Vec<usize>), f64>,
}

impl BlockTable {
    pub(crate) fn from_map(
        left: usize,
        right: usize,
        dim: usize,
        entries: BTreeMap<(Vec<usize>, Vec<usize>), f64>,
    ) -> Self {
        Self {
            left,
            right,
            dim,
            entries,
        }
    }

    pub fn order(&self) -> usize {
        self.left + self.right
    }

    pub fn block_orders(&self) -> (usize, usize) {
        (self.left, self.right)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn weight(&self) -> f64 {
        factorial(self.left) * factorial(self.right)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], &[usize], f64)> + '_ {
        self.entries
            .iter()
            .map(|((a, b), &v)| (a.as_slice(), b.as_slice(), v))
    }

    /// Value at an ordered tuple (left block first).
    pub fn value_at(&self, idx: &[usize]) -> Result<f64> {
        if idx.len() != self.order() {
            return input("tuple length does not match table order");
        }
        let mut a = idx[..self.left].to_vec();
        let mut b = idx[self.left..].to_vec();
        a.sort_unstable();
        b.sort_unstable();
        if !is_strict(&a) || !is_strict(&b) {
            return Ok(0.0);
        }
        Ok(self.entries.get(&(a, b)).copied().unwrap_or(0.0))
    }

    pub fn norm_sq(&self) -> f64 {
        self.weight() * self.entries.values().map(|v| v * v).sum::<f64>()
    }

    /// Inner product with a table of the same block shape.
    pub fn inner(&self, other: &BlockTable) -> Result<f64> {
        if self.block_orders() != other.block_orders() {
            return input("inner product of block tables with different shapes");
        }
        Ok(self.weight()
            * self
                .entries
                .iter()
                .filter_map(|(k, v)| other.entries.get(k).map(|w| v * w))
                .sum::<f64>())
    }

    /// `sum over ordered (a, b) of self(a, b) * other(b, a)`; both blocks of
    /// `self` must have the order of the opposite block of `other`.
    pub fn swapped_inner(&self, other: &BlockTable) -> Result<f64> {
        if self.left != other.right || self.right != other.left {
            return input("swapped inner product needs transposed block shapes");
        }
        Ok(self.weight()
            * self
                .entries
                .iter()
                .filter_map(|((a, b), v)| other.entries.get(&(b.clone(), a.clone())).map(|w| v * w))
                .sum::<f64>())
    }

    pub fn to_raw(&self) -> RawTable {
        let mut t = RawTable::new(self.order(), self.dim);
        for ((a, b), v) in &self.entries {
            for pa in distinct_permutations(a) {
                for pb in distinct_permutations(b) {
                    let mut key = pa.clone();
                    key.extend_from_slice(&pb);
                    t.entries.insert(key, *v);
                }
            }
        }
        t
    }
}
