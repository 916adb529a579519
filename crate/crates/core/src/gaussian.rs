//! Standard normal utilities: distribution functions, Wasserstein and
//! Kolmogorov distances to `N(0, 1)`, and Gauss–Hermite quadrature.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{input, Result};
use crate::sampling::{stream, Estimate};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(u: f64) -> f64 {
    Normal::standard().inverse_cdf(u)
}

/// Antiderivative of `Φ` vanishing at `-∞`: `x Φ(x) + φ(x)`.
fn cdf_integral(x: f64) -> f64 {
    x * normal_cdf(x) + normal_pdf(x)
}

/// Sorts `(value, probability)` atoms and merges values closer than `1e-12`
/// (relative to their magnitude).
pub fn merge_atoms(atoms: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = atoms.iter().copied().filter(|a| a.1 > 0.0).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (x, p) in v {
        match out.last_mut() {
            Some(last) if (x - last.0).abs() <= 1e-12 * x.abs().max(1.0) => last.1 += p,
            _ => out.push((x, p)),
        }
    }
    out
}

/// `∫_a^b |Φ(x) - c| dx` in closed form.
fn abs_gap_integral(a: f64, b: f64, c: f64) -> f64 {
    let g = |x: f64| cdf_integral(x) - c * x;
    let mid = if c <= 0.0 {
        f64::NEG_INFINITY
    } else if c >= 1.0 {
        f64::INFINITY
    } else {
        normal_quantile(c)
    }
    .clamp(a, b);
    (g(mid) - g(a)).abs() + (g(b) - g(mid)).abs()
}

/// Exact 1-Wasserstein distance between a finite law and `N(0, 1)`:
/// `∫ |C(x) - Φ(x)| dx`, integrated piecewise in closed form.
pub fn w1_to_normal(atoms: &[(f64, f64)]) -> Result<f64> {
    let atoms = merge_atoms(atoms);
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    if atoms.is_empty() || (total - 1.0).abs() > 1e-9 {
        return input(format!("atom probabilities sum to {total}"));
    }
    let first = atoms[0].0;
    let last = atoms[atoms.len() - 1].0;
    // tails: C = 0 left of the first atom, C = 1 right of the last.
    let mut w = cdf_integral(first) + cdf_integral(-last);
    let mut c = 0.0;
    for pair in atoms.windows(2) {
        c += pair[0].1;
        w += abs_gap_integral(pair[0].0, pair[1].0, c.min(1.0));
    }
    Ok(w)
}

/// Kolmogorov distance `sup_x |C(x) - Φ(x)|` for a finite law.
pub fn kolmogorov_to_normal(atoms: &[(f64, f64)]) -> Result<f64> {
    let atoms = merge_atoms(atoms);
    if atoms.is_empty() {
        return input("empty law");
    }
    let mut c = 0.0;
    let mut d: f64 = 0.0;
    for (x, p) in atoms {
        let phi = normal_cdf(x);
        d = d.max((phi - c).abs());
        c += p;
        d = d.max((c - phi).abs());
    }
    Ok(d)
}

/// `φ(Φ^{-1}(j / n))` for `j = 0..=n`.
fn quantile_densities(n: usize) -> Vec<f64> {
    (0..=n)
        .map(|j| match j {
            0 => 0.0,
            j if j == n => 0.0,
            j => normal_pdf(normal_quantile(j as f64 / n as f64)),
        })
        .collect()
}

fn w1_sorted_with(sorted: &[f64], dens: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    // ∫_a^b (x - Φ^{-1}(u)) du = H(b) - H(a) with H(u) = x u + φ(Φ^{-1}(u)).
    sorted
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let (a, b) = (j as f64 / n, (j + 1) as f64 / n);
            let ha = x * a + dens[j];
            let hb = x * b + dens[j + 1];
            let u = normal_cdf(x);
            if u > a && u < b {
                let hu = x * u + normal_pdf(x);
                (hu - ha).abs() + (hb - hu).abs()
            } else {
                (hb - ha).abs()
            }
        })
        .sum()
}

/// Exact 1-Wasserstein distance between the empirical law of `samples` and
/// `N(0, 1)`, by the quantile coupling.
pub fn empirical_w1(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return input("no samples");
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(w1_sorted_with(&s, &quantile_densities(s.len())))
}

/// Empirical W1 with a bootstrap standard error from `reps` resamples.
pub fn empirical_w1_bootstrap(samples: &[f64], reps: usize, seed: u64) -> Result<Estimate> {
    if samples.is_empty() {
        return input("no samples");
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let dens = quantile_densities(s.len());
    let value = w1_sorted_with(&s, &dens);
    if reps < 2 {
        return Ok(Estimate { value, se: f64::NAN });
    }
    let n = s.len();
    let mut counts = vec![0u32; n];
    let mut resample = Vec::with_capacity(n);
    let boots: Vec<f64> = (0..reps)
        .map(|r| {
            let mut rng = stream(seed, r as u64);
            counts.iter_mut().for_each(|c| *c = 0);
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
            resample.clear();
            for (x, &c) in s.iter().zip(&counts) {
                resample.extend(std::iter::repeat_n(*x, c as usize));
            }
            w1_sorted_with(&resample, &dens)
        })
        .collect();
    let spread = Estimate::of(boots.iter().copied());
    Ok(Estimate {
        value,
        se: spread.se * (reps as f64).sqrt(),
    })
}

/// Nodes and weights of the `n`-point Gauss–Hermite rule for the standard
/// normal density (weights sum to one), by the Golub–Welsch eigenproblem.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return input("quadrature needs at least one node");
    }
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// Nodes per dimension used by [`gaussian_expectation`].
pub const HERMITE_NODES: usize = 32;

/// `E[g(Z)]` for `Z ~ N(0, cov)` in dimension at most 3, by a tensor
/// Gauss–Hermite rule applied through the Cholesky factor of `cov`.
pub fn gaussian_expectation(cov: &DMatrix<f64>, g: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let d = cov.nrows();
    if d == 0 || d > 3 || cov.ncols() != d {
        return input("quadrature supports square covariances of dimension 1 to 3");
    }
    let chol = cov.clone().cholesky().ok_or_else(|| {
        crate::Error::Input("covariance is not positive definite".into())
    })?;
    let l = chol.l();
    let (x, w) = gauss_hermite(HERMITE_NODES)?;
    let m = HERMITE_NODES;
    let mut total = 0.0;
    let mut z = vec![0.0; d];
    let mut idx = vec![0usize; d];
    for flat in 0..m.pow(d as u32) {
        let mut r = flat;
        let mut weight = 1.0;
        for i in idx.iter_mut() {
            *i = r % m;
            r /= m;
            weight *= w[*i];
        }
        for (a, za) in z.iter_mut().enumerate() {
            *za = (0..=a).map(|b| l[(a, b)] * x[idx[b]]).sum();
        }
        total += weight * g(&z);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    #[test]
    fn point_mass_at_zero() {
        let w = w1_to_normal(&[(0.0, 1.0)]).unwrap();
        assert!((w - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }

    fn quadrature_w1(atoms: &[(f64, f64)]) -> f64 {
        // composite Simpson on [-12, 12], split at atoms
        let atoms = merge_atoms(atoms);
        let cdf = |x: f64| atoms.iter().filter(|a| a.0 <= x).map(|a| a.1).sum::<f64>();
        let mut cuts = vec![-12.0];
        cuts.extend(atoms.iter().map(|a| a.0));
        cuts.push(12.0);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let c = cdf(0.5 * (a + b));
            let n = 20_000;
            let h = (b - a) / n as f64;
            let f = |x: f64| (normal_cdf(x) - c).abs();
            let mut s = f(a) + f(b);
            for i in 1..n {
                s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            total += s * h / 3.0;
        }
        total
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let laws = [
            vec![(-1.0, 0.5), (1.0, 0.5)],
            vec![(-2.0, 0.2), (0.5, 0.8)],
            vec![(-1.5, 0.1), (-0.2, 0.4), (0.3, 0.3), (2.5, 0.2)],
        ];
        for law in laws {
            let exact = w1_to_normal(&law).unwrap();
            assert!((exact - quadrature_w1(&law)).abs() < 1e-8, "{law:?}");
        }
    }

    #[test]
    fn fair_sign_matches_quantile_coupling_monte_carlo() {
        let exact = w1_to_normal(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let mut rng = stream(17, 0);
        let est = Estimate::of((0..10_000_000).map(|_| {
            let u: f64 = rng.random();
            let s = if u < 0.5 { -1.0 } else { 1.0 };
            (s - normal_quantile(u)).abs()
        }));
        assert!(est.within(exact, 3.0), "{exact} vs {est:?}");
    }

    #[test]
    fn empirical_distance_shrinks_for_normal_samples() {
        let mut rng = stream(5, 1);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let e = empirical_w1_bootstrap(&xs, 10, 3).unwrap();
        assert!(e.value < 0.02 && e.se > 0.0 && e.se < 0.01, "{e:?}");
        let single = empirical_w1(&[0.0]).unwrap();
        assert!((single - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_of_fair_sign() {
        let k = kolmogorov_to_normal(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        assert!((k - (0.5 - normal_cdf(-1.0))).abs() < 1e-15);
    }

    #[test]
    fn hermite_rule_integrates_cosines() {
        let (x, w) = gauss_hermite(HERMITE_NODES).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m4 - 3.0).abs() < 1e-11);
        for s in [0.5, 1.0, 2.0] {
            let e: f64 = x.iter().zip(&w).map(|(x, w)| w * (s * x).cos()).sum();
            assert!((e - (-s * s / 2.0).exp()).abs() < 1e-12);
        }
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let e = gaussian_expectation(&cov, |z| z[0].cos() * z[1].cos()).unwrap();
        // E cos Z1 cos Z2 = (E cos(Z1+Z2) + E cos(Z1-Z2)) / 2
        let want = 0.5 * ((-(1.0 + 2.0 + 0.6) / 2.0f64).exp() + (-(1.0 + 2.0 - 0.6) / 2.0f64).exp());
        assert!((e - want).abs() < 1e-12);
    }
}
