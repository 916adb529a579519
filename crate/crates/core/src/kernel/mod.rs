//! Sparse symmetric off-diagonal kernels and their exact algebra.
//!
//! A [`Kernel`] of order `p` on the coordinate universe `0..dim` stores one
//! coefficient per strictly increasing index tuple. The function it stands for
//! is the symmetric extension to all `p!` orderings of a stored key, and is
//! zero on every tuple with a repeated index. Intermediate results that are
//! neither symmetric nor off-diagonal live in [`RawTable`]; symmetrised
//! intermediates are kept compactly in [`SymTable`].
//!
//! Coordinates are zero-based throughout the API. The text file format is
//! one-based (see [`io`]).

mod contract;
pub mod io;
mod table;

pub use contract::{
    contract, contract_blocks, contraction_norm_sq, sym_contract, sym_contract_diagonal,
    sym_offdiag_product, tensor_inner,
};
pub use table::{BlockTable, RawTable, SymTable};

use std::collections::BTreeMap;

use crate::comb::{factorial, is_strict};
use crate::error::{input, Result};

/// Entries with magnitude below this are treated as absent when comparing kernels.
pub const ZERO_TOL: f64 = 1e-15;

/// Symmetric kernel vanishing on diagonals, stored on strictly increasing keys.
#[derive(Debug, Clone)]
pub struct Kernel {
    order: usize,
    dim: usize,
    entries: BTreeMap<Vec<usize>, f64>,
}

impl Kernel {
    pub fn zero(order: usize, dim: usize) -> Result<Self> {
        if order == 0 {
            return input("kernel order must be positive");
        }
        if dim == 0 {
            return input("kernel dimension must be positive");
        }
        Ok(Self {
            order,
            dim,
            entries: BTreeMap::new(),
        })
    }

    /// Builds a kernel from `(tuple, value)` pairs. Tuples may be given in any
    /// order of their components; each must have distinct components and the
    /// same underlying set may appear only once.
    pub fn from_entries<I>(order: usize, dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, f64)>,
    {
        let mut k = Self::zero(order, dim)?;
        for (key, value) in entries {
            let key = k.canonical_key(&key)?;
            let Some(key) = key else {
                return input(format!("kernel key {key:?} has a repeated index"));
            };
            if k.entries.contains_key(&key) {
                return input(format!("duplicate kernel key {key:?}"));
            }
            if value != 0.0 {
                k.entries.insert(key, value);
            }
        }
        Ok(k)
    }

    /// Order-one kernel `e_k`: value 1 at coordinate `k`.
    pub fn indicator(k: usize, dim: usize) -> Result<Self> {
        Self::from_entries(1, dim, [(vec![k], 1.0)])
    }

    /// Order-one kernel with the given coefficient vector.
    pub fn first_order(coeffs: &[f64]) -> Result<Self> {
        Self::from_entries(
            1,
            coeffs.len(),
            coeffs.iter().enumerate().map(|(k, &v)| (vec![k], v)),
        )
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored (nonzero) keys.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(|v| v.abs() < ZERO_TOL)
    }

    /// Stored entries as `(strictly increasing key, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        self.entries.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    /// Validates bounds and returns the sorted key, or `None` when the tuple
    /// has a repeated index.
    fn canonical_key(&self, idx: &[usize]) -> Result<Option<Vec<usize>>> {
        if idx.len() != self.order {
            return input(format!(
                "tuple {idx:?} has length {}, kernel order is {}",
                idx.len(),
                self.order
            ));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.dim) {
            return input(format!("index {bad} outside 0..{}", self.dim));
        }
        let mut key = idx.to_vec();
        key.sort_unstable();
        Ok(is_strict(&key).then_some(key))
    }

    /// Value of the symmetric off-diagonal extension at an arbitrary tuple.
    pub fn value_at(&self, idx: &[usize]) -> Result<f64> {
        Ok(match self.canonical_key(idx)? {
            Some(key) => self.entries.get(&key).copied().unwrap_or(0.0),
            None => 0.0,
        })
    }

    /// Sets the value on the set underlying `idx`. Setting zero removes the key.
    pub fn set(&mut self, idx: &[usize], value: f64) -> Result<()> {
        let Some(key) = self.canonical_key(idx)? else {
            return input(format!("cannot store diagonal tuple {idx:?}"));
        };
        if value == 0.0 {
            self.entries.remove(&key);
        } else {
            self.entries.insert(key, value);
        }
        Ok(())
    }

    pub(crate) fn from_sorted_map(order: usize, dim: usize, entries: BTreeMap<Vec<usize>, f64>) -> Self {
        Self { order, dim, entries }
    }

    /// Squared norm over all ordered tuples: `p! * sum of squares of stored values`.
    pub fn norm_sq(&self) -> f64 {
        factorial(self.order) * self.entries.values().map(|v| v * v).sum::<f64>()
    }

    /// Inner product over all ordered tuples.
    pub fn inner(&self, other: &Kernel) -> Result<f64> {
        if self.order != other.order {
            return input(format!(
                "inner product of kernels with orders {} and {}",
                self.order, other.order
            ));
        }
        let (small, large) = if self.nnz() <= other.nnz() {
            (self, other)
        } else {
            (other, self)
        };
        let s: f64 = small
            .entries
            .iter()
            .filter_map(|(k, v)| large.entries.get(k).map(|w| v * w))
            .sum();
        Ok(factorial(self.order) * s)
    }

    /// Maximal influence: the largest total squared weight carried by a single
    /// coordinate, summed over ordered tuples of the remaining arguments.
    pub fn max_influence(&self) -> f64 {
        self.influences().into_iter().fold(0.0, f64::max)
    }

    /// Per-coordinate influences `sum over (i_1..i_{d-1}) f(i_1..i_{d-1}, k)^2`.
    /// Sums are compensated, so many equal weights add up to the rounded total.
    pub fn influences(&self) -> Vec<f64> {
        let mut inf = vec![0.0; self.dim];
        let mut carry = vec![0.0; self.dim];
        for (key, v) in &self.entries {
            let x = v * v;
            for &k in key {
                let t = inf[k] + x;
                carry[k] += if inf[k].abs() >= x { (inf[k] - t) + x } else { (x - t) + inf[k] };
                inf[k] = t;
            }
        }
        let w = factorial(self.order - 1);
        inf.iter().zip(&carry).map(|(s, c)| (s + c) * w).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.entries.values_mut().for_each(|v| *v *= c);
        out.entries.retain(|_, v| *v != 0.0);
        out
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, other: &Kernel, c: f64) -> Result<Self> {
        if self.order != other.order {
            return input("cannot add kernels of different orders");
        }
        let mut out = self.clone();
        out.dim = out.dim.max(other.dim);
        for (k, v) in &other.entries {
            *out.entries.entry(k.clone()).or_insert(0.0) += c * v;
        }
        out.entries.retain(|_, v| *v != 0.0);
        Ok(out)
    }

    /// Rescaled so that `p! * ||f||^2 = 1`, i.e. `E[Q_p(f)^2] = 1`.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sq() * factorial(self.order);
        if n <= 0.0 {
            return input("cannot normalise the zero kernel");
        }
        Ok(self.scaled(1.0 / n.sqrt()))
    }

    /// Drops entries with magnitude below `tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        let mut out = self.clone();
        out.entries.retain(|_, v| v.abs() >= tol);
        out
    }

    /// Same kernel viewed on a larger coordinate universe.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        if let Some(max) = self.entries.keys().filter_map(|k| k.last()).max() {
            if *max >= dim {
                return input(format!("kernel uses coordinate {max}, cannot shrink to {dim}"));
            }
        }
        let mut out = self.clone();
        out.dim = dim;
        Ok(out)
    }

    /// Largest coordinate-wise absolute difference between the represented functions.
    pub fn max_abs_diff(&self, other: &Kernel) -> f64 {
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

    /// The order `d-1` section `f(k, .)`. Requires order at least 2.
    pub fn section(&self, k: usize) -> Result<Self> {
        if self.order < 2 {
            return input("section of an order-one kernel is a scalar");
        }
        let mut out = Self::zero(self.order - 1, self.dim)?;
        for (key, v) in &self.entries {
            if let Ok(pos) = key.binary_search(&k) {
                let mut rest = key.clone();
                rest.remove(pos);
                out.entries.insert(rest, *v);
            }
        }
        Ok(out)
    }

    /// Largest coordinate touched by the support, if any.
    pub fn support_max(&self) -> Option<usize> {
        self.entries.keys().filter_map(|k| k.last().copied()).max()
    }
}

impl PartialEq for Kernel {
    fn eq(&self, other: &Self) -> bool {
        if self.order != other.order {
            return false;
        }
        let a = self.entries.iter().filter(|(_, v)| v.abs() >= ZERO_TOL);
        let b = other.entries.iter().filter(|(_, v)| v.abs() >= ZERO_TOL);
        a.eq(b)
    }
}
