//! Homogeneous sums, exact chaos decompositions and the symmetric product formula.

use std::collections::BTreeMap;

use crate::comb::{binomial, factorial};
use crate::error::{input, Result};
use crate::hypercube::{check_cap, HypercubeFunction};
use crate::kernel::{sym_contract, sym_offdiag_product, Kernel};
use crate::law::RademacherLaw;

/// `Q_d(f; y) = d! * sum over stored keys of f(A) prod_{a in A} y_a`.
///
/// `y` must cover every coordinate used by `f`.
pub fn eval_q_values(f: &Kernel, y: &[f64]) -> f64 {
    let s: f64 = f
        .iter()
        .map(|(key, v)| key.iter().fold(v, |acc, &a| acc * y[a]))
        .sum();
    factorial(f.order()) * s
}

fn check_fits(f: &Kernel, law: &RademacherLaw) -> Result<()> {
    if f.dim() > law.dim() {
        return input(format!(
            "kernel lives on {} coordinates but the law has only {}",
            f.dim(),
            law.dim()
        ));
    }
    Ok(())
}

/// `Q_d(f; Y)` at one hypercube atom.
pub fn eval_q(f: &Kernel, law: &RademacherLaw, atom: u64) -> Result<f64> {
    check_fits(f, law)?;
    Ok(eval_q_values(f, &law.normalized_at(atom)))
}

/// Full value table of `Q_d(f; Y)` over the law's hypercube.
pub fn q_table(f: &Kernel, law: &RademacherLaw) -> Result<HypercubeFunction> {
    check_fits(f, law)?;
    let mut d = ChaosDecomposition::zero(law.dim());
    d.add_kernel(&f.with_dim(law.dim())?, 1.0)?;
    d.to_function(law)
}

/// Exact `E[Q_d(f; Y)^m]` for each requested `m`.
pub fn moments(f: &Kernel, law: &RademacherLaw, orders: &[i32]) -> Result<BTreeMap<i32, f64>> {
    let t = q_table(f, law)?;
    orders.iter().map(|&m| Ok((m, t.moment(law, m)?))).collect()
}

/// How a decomposition was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Exact transform of a value table, or algebra valid under any law.
    Exact,
    /// Product formula that is only valid when every `p_k = 1/2`.
    SymmetricLawOnly,
}

/// `F = constant + sum_k Q_k(h_k)` with off-diagonal symmetric `h_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosDecomposition {
    dim: usize,
    constant: f64,
    kernels: BTreeMap<usize, Kernel>,
    provenance: Provenance,
}

impl ChaosDecomposition {
    pub fn zero(dim: usize) -> Self {
        Self::constant_only(dim, 0.0)
    }

    pub fn constant_only(dim: usize, c: f64) -> Self {
        Self {
            dim,
            constant: c,
            kernels: BTreeMap::new(),
            provenance: Provenance::Exact,
        }
    }

    /// The single chaos element `Q_p(f)`.
    pub fn from_kernel(f: &Kernel) -> Self {
        let mut d = Self::zero(f.dim());
        d.add_kernel(f, 1.0).expect("dimensions agree");
        d
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn kernel(&self, order: usize) -> Option<&Kernel> {
        self.kernels.get(&order)
    }

    pub fn kernels(&self) -> impl Iterator<Item = (usize, &Kernel)> + '_ {
        self.kernels.iter().map(|(&k, f)| (k, f))
    }

    /// Highest order carrying a nonzero kernel, 0 when `F` is constant.
    pub fn max_order(&self) -> usize {
        self.kernels
            .iter()
            .rev()
            .find(|(_, f)| !f.is_zero())
            .map_or(0, |(&k, _)| k)
    }

    /// Adds `c * Q_p(f)`.
    pub fn add_kernel(&mut self, f: &Kernel, c: f64) -> Result<()> {
        if f.dim() != self.dim {
            return input(format!(
                "kernel dimension {} differs from decomposition dimension {}",
                f.dim(),
                self.dim
            ));
        }
        let slot = match self.kernels.remove(&f.order()) {
            Some(old) => old.add_scaled(f, c)?,
            None => f.scaled(c),
        };
        if slot.nnz() > 0 {
            self.kernels.insert(f.order(), slot);
        }
        Ok(())
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    /// Termwise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.constant += other.constant;
        for f in other.kernels.values() {
            out.add_kernel(f, 1.0)?;
        }
        if other.provenance == Provenance::SymmetricLawOnly {
            out.provenance = Provenance::SymmetricLawOnly;
        }
        Ok(out)
    }

    /// Multiplies the order-`k` component by `factor(k)`, constant included (`k = 0`).
    pub fn map_orders(&self, factor: impl Fn(usize) -> f64) -> Self {
        let mut out = Self {
            dim: self.dim,
            constant: factor(0) * self.constant,
            kernels: BTreeMap::new(),
            provenance: self.provenance,
        };
        for (&k, f) in &self.kernels {
            let g = f.scaled(factor(k));
            if g.nnz() > 0 {
                out.kernels.insert(k, g);
            }
        }
        out
    }

    /// The component `J_k(F)` alone (`k = 0` gives the constant).
    pub fn projection(&self, k: usize) -> Self {
        self.map_orders(|j| if j == k { 1.0 } else { 0.0 })
    }

    /// `Var(J_k(F)) = k! ||h_k||^2` for `k >= 1`.
    pub fn chaos_variance(&self, k: usize) -> f64 {
        self.kernels.get(&k).map_or(0.0, |f| factor_norm(f))
    }

    /// `Var(F)`, by orthogonality.
    pub fn variance(&self) -> f64 {
        self.kernels.values().map(factor_norm).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.constant * self.constant + self.variance()
    }

    /// Largest coefficient difference, constants included.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut m = (self.constant - other.constant).abs();
        for (k, f) in &self.kernels {
            m = m.max(match other.kernels.get(k) {
                Some(g) => f.max_abs_diff(g),
                None => f.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max),
            });
        }
        for (k, g) in &other.kernels {
            if !self.kernels.contains_key(k) {
                m = m.max(g.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max));
            }
        }
        m
    }

    /// Largest coefficient carried by chaoses strictly above `order`.
    pub fn max_abs_above(&self, order: usize) -> f64 {
        self.kernels
            .range(order + 1..)
            .flat_map(|(_, f)| f.iter().map(|(_, v)| v.abs()))
            .fold(0.0, f64::max)
    }

    /// Direct evaluation of the expansion at one atom.
    pub fn eval_atom(&self, law: &RademacherLaw, atom: u64) -> Result<f64> {
        let y = law.normalized_at(atom);
        if y.len() < self.dim {
            return input("law has fewer coordinates than the decomposition");
        }
        Ok(self.constant + self.kernels.values().map(|f| eval_q_values(f, &y)).sum::<f64>())
    }

    /// Value table of the expansion, via the inverse transform.
    pub fn to_function(&self, law: &RademacherLaw) -> Result<HypercubeFunction> {
        if law.dim() != self.dim {
            return input(format!(
                "decomposition has {} coordinates, law has {}",
                self.dim,
                law.dim()
            ));
        }
        check_cap(self.dim)?;
        let mut values = vec![0.0; 1usize << self.dim];
        values[0] = self.constant;
        for (&k, f) in &self.kernels {
            let w = factorial(k);
            for (key, v) in f.iter() {
                let mask = key.iter().fold(0usize, |m, &a| m | 1 << a);
                values[mask] += w * v;
            }
        }
        let mut t = HypercubeFunction::new(self.dim, values)?;
        t.walsh_inverse(law);
        Ok(t)
    }
}

fn factor_norm(f: &Kernel) -> f64 {
    factorial(f.order()) * f.norm_sq()
}

/// Chaos decomposition of a value table.
///
/// The biased butterfly maps the table to `E[D_S F]` at every coordinate set
/// `S`, and `h_{|S|}(S) = E[D_S F] / |S|!`. Coefficients below `1e-14` relative
/// to `max |F|` are dropped as round-off.
pub fn walsh_decompose(f: &HypercubeFunction, law: &RademacherLaw) -> Result<ChaosDecomposition> {
    if law.dim() != f.dim() {
        return input(format!(
            "table has {} coordinates, law has {}",
            f.dim(),
            law.dim()
        ));
    }
    let n = f.dim();
    let tol = 1e-14 * f.max_abs().max(1e-300);
    let mut t = f.clone();
    t.walsh_forward(law);
    let vals = t.into_values();
    let mut by_order: Vec<BTreeMap<Vec<usize>, f64>> = vec![BTreeMap::new(); n + 1];
    for (mask, &v) in vals.iter().enumerate().skip(1) {
        if v.abs() <= tol {
            continue;
        }
        let key: Vec<usize> = (0..n).filter(|&k| mask >> k & 1 == 1).collect();
        by_order[key.len()].insert(key, v);
    }
    let mut out = ChaosDecomposition::constant_only(n, vals[0]);
    for (m, entries) in by_order.into_iter().enumerate().skip(1) {
        if entries.is_empty() {
            continue;
        }
        let w = 1.0 / factorial(m);
        let entries = entries.into_iter().map(|(k, v)| (k, v * w)).collect();
        out.kernels.insert(m, Kernel::from_sorted_map(m, n, entries));
    }
    Ok(out)
}

/// `Q_p(f) Q_q(g)` through the product formula for the symmetric law:
/// `sum_r r! C(p,r) C(q,r) Q_{p+q-2r}(f ⊗̃_r g 1_Δ)`.
pub fn multiply_symmetric(f: &Kernel, g: &Kernel) -> Result<ChaosDecomposition> {
    if f.dim() != g.dim() {
        return input(format!("dimension mismatch: {} vs {}", f.dim(), g.dim()));
    }
    let (p, q) = (f.order(), g.order());
    let mut out = ChaosDecomposition::zero(f.dim());
    out.provenance = Provenance::SymmetricLawOnly;
    for r in 0..=p.min(q) {
        let c = factorial(r) * binomial(p, r) * binomial(q, r);
        let t = sym_contract(f, g, r)?;
        match t.offdiag_kernel() {
            Some(h) => out.add_kernel(&h, c)?,
            None => out.constant += c * t.as_scalar().expect("order-zero table"),
        }
    }
    Ok(out)
}

/// Outcome of decomposing `Q_p(f) Q_q(g)` and comparing its top chaos with
/// `f ⊗̃ g 1_Δ`.
#[derive(Debug, Clone)]
pub struct ProductCheck {
    pub decomposition: ChaosDecomposition,
    /// Largest coefficient found above order `p + q`.
    pub above_top: f64,
    /// Largest deviation of the order `p + q` kernel from `f ⊗̃ g 1_Δ`.
    pub top_deviation: f64,
}

impl ProductCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.above_top <= tol && self.top_deviation <= tol
    }
}

pub fn product_top_kernel_check(f: &Kernel, g: &Kernel, law: &RademacherLaw) -> Result<ProductCheck> {
    let prod = q_table(f, law)?.mul(&q_table(g, law)?)?;
    let d = walsh_decompose(&prod, law)?;
    let top = f.order() + g.order();
    let expected = sym_offdiag_product(&f.with_dim(law.dim())?, &g.with_dim(law.dim())?)?;
    let top_deviation = match d.kernel(top) {
        Some(h) => h.max_abs_diff(&expected),
        None => expected.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max),
    };
    Ok(ProductCheck {
        above_top: d.max_abs_above(top),
        top_deviation,
        decomposition: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn edge() -> Kernel {
        Kernel::from_entries(2, 3, [(vec![0, 1], 0.5)]).unwrap()
    }

    #[test]
    fn evaluates_product_of_coordinates() {
        let law = RademacherLaw::symmetric(3).unwrap();
        assert_eq!(eval_q(&edge(), &law, 0b111).unwrap(), 1.0);
        assert_eq!(eval_q(&edge(), &law, 0b110).unwrap(), -1.0);
        let z = Kernel::zero(2, 3).unwrap();
        assert_eq!(eval_q(&z, &law, 5).unwrap(), 0.0);
    }

    #[test]
    fn table_matches_pointwise_evaluation() {
        let law = RademacherLaw::new(vec![0.2, 0.6, 0.7, 0.45]).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let f = gen::random_sparse(3, 4, 0.8, &mut rng).unwrap();
        let t = q_table(&f, &law).unwrap();
        for x in 0..16u64 {
            assert!((t.value(x) - eval_q(&f, &law, x).unwrap()).abs() < 1e-13);
        }
    }

    #[test]
    fn documented_moments() {
        let law = RademacherLaw::symmetric(3).unwrap();
        let e1 = Kernel::indicator(0, 3).unwrap();
        let m = moments(&e1, &law, &[2, 4]).unwrap();
        assert_eq!((m[&2], m[&4]), (1.0, 1.0));
        let m = moments(&edge(), &law, &[2, 4]).unwrap();
        assert!((m[&2] - 1.0).abs() < 1e-15 && (m[&4] - 1.0).abs() < 1e-15);
        let fc = gen::counterexample(2, 10).unwrap();
        let law = RademacherLaw::symmetric(10).unwrap();
        assert!((moments(&fc, &law, &[2]).unwrap()[&2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decomposes_product_of_two_coordinates() {
        let law = RademacherLaw::symmetric(3).unwrap();
        let d = walsh_decompose(&q_table(&edge(), &law).unwrap(), &law).unwrap();
        assert!(d.constant().abs() < 1e-15);
        assert_eq!(d.kernels().count(), 1);
        assert!(d.kernel(2).unwrap().max_abs_diff(&edge()) < 1e-15);
        let c = walsh_decompose(&HypercubeFunction::constant(3, 1.5).unwrap(), &law).unwrap();
        assert_eq!((c.constant(), c.kernels().count()), (1.5, 0));
    }

    #[test]
    fn square_of_first_chaos() {
        let law = RademacherLaw::new(vec![0.3, 0.8, 0.5]).unwrap();
        let h = Kernel::first_order(&[0.4, -1.0, 0.7]).unwrap();
        let f = q_table(&h, &law).unwrap();
        let d = walsh_decompose(&f.mul(&f).unwrap(), &law).unwrap();
        assert!((d.constant() - h.norm_sq()).abs() < 1e-14);
        let w: Vec<f64> = (0..3)
            .map(|k| {
                let (p, q) = (law.p(k), law.q(k));
                h.value_at(&[k]).unwrap().powi(2) * (q - p) / (p * q).sqrt()
            })
            .collect();
        assert!(d.kernel(1).unwrap().max_abs_diff(&Kernel::first_order(&w).unwrap()) < 1e-14);
        let top = sym_offdiag_product(&h, &h).unwrap();
        assert!(d.kernel(2).unwrap().max_abs_diff(&top) < 1e-14);
    }

    #[test]
    fn symmetric_products() {
        let e1 = Kernel::indicator(0, 2).unwrap();
        let e2 = Kernel::indicator(1, 2).unwrap();
        let d = multiply_symmetric(&e1, &e1).unwrap();
        assert_eq!((d.constant(), d.max_order()), (1.0, 0));
        assert_eq!(d.provenance(), Provenance::SymmetricLawOnly);
        let d = multiply_symmetric(&e1, &e2).unwrap();
        assert_eq!(d.max_order(), 2);
        assert!((d.kernel(2).unwrap().value_at(&[0, 1]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn product_check_on_first_coordinate() {
        let law = RademacherLaw::new(vec![0.7, 0.4]).unwrap();
        let e1 = Kernel::indicator(0, 2).unwrap();
        let c = product_top_kernel_check(&e1, &e1, &law).unwrap();
        assert!(c.passed(1e-12));
        assert!((c.decomposition.constant() - 1.0).abs() < 1e-14);
        let w = (0.3 - 0.7) / (0.21f64).sqrt();
        assert!((c.decomposition.kernel(1).unwrap().value_at(&[0]).unwrap() - w).abs() < 1e-14);
    }

    #[test]
    fn orders_map_and_project() {
        let d = ChaosDecomposition::from_kernel(&edge());
        let l = d.map_orders(|k| -(k as f64));
        assert_eq!(l.kernel(2).unwrap().value_at(&[0, 1]).unwrap(), -1.0);
        assert_eq!(d.projection(1).max_order(), 0);
        assert!((d.variance() - 1.0).abs() < 1e-15);
    }
}
