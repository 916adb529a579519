//! Exact value tables over `{±1}^N` and the coordinate-wise operators acting on them.
//!
//! Atoms are bitmasks: bit `k` set means `X_k = +1`. Every operator here is a
//! sweep of independent one-coordinate updates, so the work per sweep is
//! `O(2^N)` and results do not depend on how the sweep is scheduled.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::error::{input, Error, Result};
use crate::law::RademacherLaw;

/// Largest dimension enumerated exactly unless reconfigured.
pub const DEFAULT_EXACT_CAP: usize = 24;

static EXACT_CAP: AtomicUsize = AtomicUsize::new(DEFAULT_EXACT_CAP);

/// Sets the process-wide limit on exactly enumerated dimensions.
pub fn set_exact_cap(cap: usize) {
    EXACT_CAP.store(cap.min(40), Ordering::Relaxed);
}

pub fn exact_cap() -> usize {
    EXACT_CAP.load(Ordering::Relaxed)
}

/// Fails with a resource error when `dim` is above the exact cap.
pub fn check_cap(dim: usize) -> Result<()> {
    let cap = exact_cap();
    if dim > cap {
        return Err(Error::Resource(format!(
            "dimension {dim} exceeds the exact enumeration cap {cap}"
        )));
    }
    Ok(())
}

const PAR_MIN: usize = 1 << 14;

/// Real function on the hypercube, stored as its full value table.
#[derive(Debug, Clone, PartialEq)]
pub struct HypercubeFunction {
    dim: usize,
    values: Vec<f64>,
}

impl HypercubeFunction {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        check_cap(dim)?;
        if values.len() != 1usize << dim {
            return input(format!(
                "a table on {dim} coordinates needs {} values, got {}",
                1usize << dim,
                values.len()
            ));
        }
        Ok(Self { dim, values })
    }

    pub fn from_fn<F>(dim: usize, f: F) -> Result<Self>
    where
        F: Fn(u64) -> f64 + Sync,
    {
        check_cap(dim)?;
        let n = 1usize << dim;
        let values = if n >= PAR_MIN {
            (0..n).into_par_iter().map(|x| f(x as u64)).collect()
        } else {
            (0..n).map(|x| f(x as u64)).collect()
        };
        Ok(Self { dim, values })
    }

    pub fn constant(dim: usize, c: f64) -> Result<Self> {
        Self::from_fn(dim, |_| c)
    }

    /// The normalised coordinate `Y_k`.
    pub fn coordinate(law: &RademacherLaw, k: usize) -> Result<Self> {
        if k >= law.dim() {
            return input(format!("coordinate {k} outside 0..{}", law.dim()));
        }
        let (a, b) = (law.normalized_value(k, true), law.normalized_value(k, false));
        Self::from_fn(law.dim(), |x| if x >> k & 1 == 1 { a } else { b })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, atom: u64) -> f64 {
        self.values[atom as usize]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        Self {
            dim: self.dim,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dim != other.dim {
            return input("tables on different dimensions");
        }
        Ok(Self {
            dim: self.dim,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    fn check_law(&self, law: &RademacherLaw) -> Result<()> {
        if law.dim() != self.dim {
            return input(format!(
                "table has {} coordinates, law has {}",
                self.dim,
                law.dim()
            ));
        }
        Ok(())
    }

    /// `E[F]` under the product law, computed by averaging out one coordinate
    /// at a time from the highest bit down.
    pub fn expect(&self, law: &RademacherLaw) -> Result<f64> {
        self.check_law(law)?;
        let mut cur = self.values.clone();
        for k in (0..self.dim).rev() {
            let half = cur.len() / 2;
            let (p, q) = (law.p(k), law.q(k));
            let (lo, hi) = cur.split_at(half);
            let next: Vec<f64> = if half >= PAR_MIN {
                lo.par_iter().zip(hi).map(|(&a, &b)| q * a + p * b).collect()
            } else {
                lo.iter().zip(hi).map(|(&a, &b)| q * a + p * b).collect()
            };
            cur = next;
        }
        Ok(cur[0])
    }

    /// Probability of every atom under the law, in atom order.
    pub fn atom_probs(law: &RademacherLaw) -> Result<Vec<f64>> {
        check_cap(law.dim())?;
        let mut probs = vec![1.0];
        for k in 0..law.dim() {
            let (p, q) = (law.p(k), law.q(k));
            let lo: Vec<f64> = probs.iter().map(|w| w * q).collect();
            let hi: Vec<f64> = probs.iter().map(|w| w * p).collect();
            probs = lo;
            probs.extend(hi);
        }
        Ok(probs)
    }

    /// The law of `F` as `(value, probability)` pairs, one per atom.
    pub fn atoms(&self, law: &RademacherLaw) -> Result<Vec<(f64, f64)>> {
        self.check_law(law)?;
        let probs = Self::atom_probs(law)?;
        Ok(self.values.iter().copied().zip(probs).collect())
    }

    /// `E[F^m]`.
    pub fn moment(&self, law: &RademacherLaw, m: i32) -> Result<f64> {
        self.map(|v| v.powi(m)).expect(law)
    }

    /// Applies `(a, b) -> op(a, b)` to every pair of atoms differing only in
    /// coordinate `k` (`a` at `X_k = -1`, `b` at `X_k = +1`).
    fn sweep(&mut self, k: usize, op: impl Fn(f64, f64) -> (f64, f64) + Sync) {
        let bit = 1usize << k;
        let apply = |chunk: &mut [f64]| {
            let (lo, hi) = chunk.split_at_mut(bit);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = op(*a, *b);
                *a = x;
                *b = y;
            }
        };
        if self.values.len() >= PAR_MIN {
            self.values.par_chunks_mut(2 * bit).for_each(apply);
        } else {
            self.values.chunks_mut(2 * bit).for_each(apply);
        }
    }

    /// Discrete gradient `D_k F = sqrt(p_k q_k) (F^{⊕k} - F^{⊖k})`, constant in coordinate `k`.
    pub fn gradient(&self, k: usize, law: &RademacherLaw) -> Result<Self> {
        self.check_law(law)?;
        if k >= self.dim {
            return input(format!("coordinate {k} outside 0..{}", self.dim));
        }
        let s = (law.p(k) * law.q(k)).sqrt();
        let mut out = self.clone();
        out.sweep(k, |a, b| {
            let d = s * (b - a);
            (d, d)
        });
        Ok(out)
    }

    /// `E_k F`: coordinate `k` integrated out, the rest held fixed.
    pub fn average_out(&self, k: usize, law: &RademacherLaw) -> Result<Self> {
        self.check_law(law)?;
        let (p, q) = (law.p(k), law.q(k));
        let mut out = self.clone();
        out.sweep(k, |a, b| {
            let m = q * a + p * b;
            (m, m)
        });
        Ok(out)
    }

    /// Ornstein–Uhlenbeck generator evaluated pointwise as `sum_k (E_k F - F)`.
    pub fn generator(&self, law: &RademacherLaw) -> Result<Self> {
        self.check_law(law)?;
        let mut acc = self.scale(-(self.dim as f64));
        for k in 0..self.dim {
            let ek = self.average_out(k, law)?;
            acc.values.iter_mut().zip(&ek.values).for_each(|(a, b)| *a += b);
        }
        Ok(acc)
    }

    /// `E[F(X^t) | X]` for the exponential-clock resampling: each coordinate is
    /// kept with weight `e^{-t}` and otherwise replaced by an independent draw.
    pub fn mehler(&self, t: f64, law: &RademacherLaw) -> Result<Self> {
        self.check_law(law)?;
        if t < 0.0 || !t.is_finite() {
            return input(format!("time must be finite and nonnegative, got {t}"));
        }
        let keep = (-t).exp();
        let mut out = self.clone();
        for k in 0..self.dim {
            let (p, q) = (law.p(k), law.q(k));
            out.sweep(k, |a, b| {
                let m = (1.0 - keep) * (q * a + p * b);
                (keep * a + m, keep * b + m)
            });
        }
        Ok(out)
    }

    /// In-place transform to `E_{S^c} D_S F` indexed by the bitmask `S`.
    pub(crate) fn walsh_forward(&mut self, law: &RademacherLaw) {
        for k in 0..self.dim {
            let (p, q) = (law.p(k), law.q(k));
            let s = (p * q).sqrt();
            self.sweep(k, |a, b| (q * a + p * b, s * (b - a)));
        }
    }

    /// Inverse of [`walsh_forward`](Self::walsh_forward): `F = sum_S c_S prod_{k in S} Y_k`.
    pub(crate) fn walsh_inverse(&mut self, law: &RademacherLaw) {
        for k in 0..self.dim {
            let (up, down) = (law.normalized_value(k, true), law.normalized_value(k, false));
            self.sweep(k, |e, d| (e + d * down, e + d * up));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law() -> RademacherLaw {
        RademacherLaw::new(vec![0.3, 0.5, 0.85]).unwrap()
    }

    #[test]
    fn coordinate_is_centred() {
        let law = law();
        for k in 0..3 {
            let y = HypercubeFunction::coordinate(&law, k).unwrap();
            assert!(y.expect(&law).unwrap().abs() < 1e-15);
            assert!((y.moment(&law, 2).unwrap() - 1.0).abs() < 1e-14);
        }
        assert_eq!(HypercubeFunction::constant(3, 2.5).unwrap().expect(&law).unwrap(), 2.5);
    }

    #[test]
    fn expectation_matches_atom_weights() {
        let law = law();
        let f = HypercubeFunction::from_fn(3, |x| (x as f64 + 1.0).ln()).unwrap();
        let direct: f64 = (0..8u64).map(|x| f.value(x) * law.atom_prob(x)).sum();
        assert!((f.expect(&law).unwrap() - direct).abs() < 1e-15);
        for (x, (v, p)) in f.atoms(&law).unwrap().into_iter().enumerate() {
            assert_eq!(v, f.value(x as u64));
            assert!((p - law.atom_prob(x as u64)).abs() < 1e-16);
        }
    }

    #[test]
    fn gradient_of_own_coordinate_is_one() {
        let law = law();
        for k in 0..3 {
            let y = HypercubeFunction::coordinate(&law, k).unwrap();
            let d = y.gradient(k, &law).unwrap();
            assert!(d.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
            let other = y.gradient((k + 1) % 3, &law).unwrap();
            assert!(other.max_abs() == 0.0);
        }
    }

    #[test]
    fn transform_round_trip() {
        let law = law();
        let f = HypercubeFunction::from_fn(3, |x| (x as f64).sin()).unwrap();
        let mut g = f.clone();
        g.walsh_forward(&law);
        g.walsh_inverse(&law);
        assert!(g.max_abs_diff(&f) < 1e-14);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            HypercubeFunction::constant(exact_cap() + 1, 0.0),
            Err(Error::Resource(_))
        ));
        assert!(HypercubeFunction::new(2, vec![0.0; 3]).is_err());
    }
}
