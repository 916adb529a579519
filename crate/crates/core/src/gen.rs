//! Kernel generators used by tests, invariant suites and experiments.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::comb::{factorial, subsets};
use crate::error::{input, Result};
use crate::kernel::Kernel;
use crate::law::RademacherLaw;

/// The non-universal kernel `f_N`: value `1/(q! sqrt(N-q+1))` on the sets
/// `{1, .., q-1, s}` for `q <= s <= N`. Its maximal influence is `1/(q q!)`
/// for every `N`.
pub fn counterexample(q: usize, n: usize) -> Result<Kernel> {
    if q < 2 {
        return input("counterexample kernel needs q >= 2");
    }
    if n < q {
        return input(format!("counterexample kernel needs N >= q, got N = {n}, q = {q}"));
    }
    let v = 1.0 / (factorial(q) * ((n - q + 1) as f64).sqrt());
    let head: Vec<usize> = (0..q - 1).collect();
    Kernel::from_entries(
        q,
        n,
        (q - 1..n).map(|s| {
            let mut key = head.clone();
            key.push(s);
            (key, v)
        }),
    )
}

/// Random kernel: each increasing key is kept with probability `density`
/// and given a standard Gaussian coefficient. Not normalised; may be zero.
pub fn random_sparse<R: Rng + ?Sized>(order: usize, dim: usize, density: f64, rng: &mut R) -> Result<Kernel> {
    let all: Vec<usize> = (0..dim).collect();
    let entries: Vec<(Vec<usize>, f64)> = subsets(&all, order)
        .into_iter()
        .filter_map(|key| {
            let keep = rng.random::<f64>() < density;
            let v: f64 = rng.sample(StandardNormal);
            keep.then_some((key, v))
        })
        .collect();
    Kernel::from_entries(order, dim, entries)
}

/// Random kernel normalised to `p! ||f||^2 = 1`, resampled until nonzero.
pub fn random_normalized<R: Rng + ?Sized>(order: usize, dim: usize, density: f64, rng: &mut R) -> Result<Kernel> {
    if order > dim {
        return input(format!("no off-diagonal kernel of order {order} on {dim} coordinates"));
    }
    if density <= 0.0 {
        return input("density must be positive");
    }
    loop {
        let k = random_sparse(order, dim, density, rng)?;
        if !k.is_zero() {
            return k.normalized();
        }
    }
}

/// All keys equal, normalised.
pub fn full_support(order: usize, dim: usize) -> Result<Kernel> {
    let all: Vec<usize> = (0..dim).collect();
    let keys = subsets(&all, order);
    if keys.is_empty() {
        return input(format!("no off-diagonal kernel of order {order} on {dim} coordinates"));
    }
    Kernel::from_entries(order, dim, keys.into_iter().map(|k| (k, 1.0)))?.normalized()
}

/// Order-two ring kernel on `dim >= 3` coordinates: edges `{i, i+1 mod dim}`,
/// normalised. Its maximal influence is `1/(2 dim)`.
pub fn ring(dim: usize) -> Result<Kernel> {
    if dim < 3 {
        return input("ring kernel needs at least three coordinates");
    }
    Kernel::from_entries(2, dim, (0..dim).map(|i| (vec![i, (i + 1) % dim], 1.0)))?.normalized()
}

/// First-order kernel with equal weights `1/sqrt(dim)`.
pub fn uniform_first_order(dim: usize) -> Result<Kernel> {
    Kernel::first_order(&vec![1.0 / (dim as f64).sqrt(); dim])
}

/// Law with each `p_k` uniform in `[lo, hi]`.
pub fn random_law<R: Rng + ?Sized>(dim: usize, lo: f64, hi: f64, rng: &mut R) -> Result<RademacherLaw> {
    RademacherLaw::new((0..dim).map(|_| rng.random_range(lo..=hi)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    #[test]
    fn counterexample_values() {
        let f = counterexample(2, 2).unwrap();
        assert_eq!(f.nnz(), 1);
        assert!((f.value_at(&[0, 1]).unwrap() - 0.5).abs() < 1e-15);
        assert!((2.0 * f.norm_sq() - 1.0).abs() < 1e-15);
        let f = counterexample(2, 5).unwrap();
        assert_eq!(f.nnz(), 4);
        assert!(f.iter().all(|(_, v)| (v - 0.25).abs() < 1e-15));
        assert!(counterexample(3, 2).is_err());
        assert!(counterexample(1, 4).is_err());
    }

    #[test]
    fn counterexample_influence_is_constant() {
        for q in 2..=4 {
            for n in [q, q + 1, 10, 40] {
                let f = counterexample(q, n).unwrap();
                let want = 1.0 / (q as f64 * factorial(q));
                assert!((f.max_influence() - want).abs() < 1e-14, "q = {q}, N = {n}");
                assert!((factorial(q) * f.norm_sq() - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn generated_kernels_are_normalised() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        for order in 1..=3 {
            let f = random_normalized(order, 7, 0.4, &mut rng).unwrap();
            assert!((factorial(order) * f.norm_sq() - 1.0).abs() < 1e-12);
        }
        let r = ring(10).unwrap();
        assert!((r.max_influence() - 0.05).abs() < 1e-15);
        let h = full_support(2, 6).unwrap();
        assert!((h.max_influence() - 5.0 * h.iter().next().unwrap().1.powi(2)).abs() < 1e-15);
    }
}
