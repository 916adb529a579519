//! Ornstein–Uhlenbeck generator and semigroup, the carré du champ, and the
//! exponential-clock coupling `X^t` that makes `(F, F_t)` exchangeable.

use rand::Rng;
use rand_distr::Exp1;

use crate::chaos::{q_table, walsh_decompose, ChaosDecomposition};
use crate::error::{input, Result};
use crate::hypercube::{check_cap, HypercubeFunction};
use crate::kernel::Kernel;
use crate::law::RademacherLaw;
use crate::sampling::{derive_seed, stream, Estimate};

/// `L`: the order-`k` component is multiplied by `-k`.
pub fn apply_l(d: &ChaosDecomposition) -> ChaosDecomposition {
    d.map_orders(|k| -(k as f64))
}

/// `P_t`: the order-`k` component is multiplied by `e^{-kt}`.
pub fn apply_pt(d: &ChaosDecomposition, t: f64) -> Result<ChaosDecomposition> {
    check_time(t)?;
    Ok(d.map_orders(|k| (-(k as f64) * t).exp()))
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return input(format!("time must be finite and nonnegative, got {t}"));
    }
    Ok(())
}

/// `½ (L(FG) - F LG - G LF)` with `L` evaluated pointwise as `sum_k (E_k - I)`.
pub fn gamma_pointwise(
    f: &HypercubeFunction,
    g: &HypercubeFunction,
    law: &RademacherLaw,
) -> Result<HypercubeFunction> {
    let lfg = f.mul(g)?.generator(law)?;
    let lf = f.generator(law)?;
    let lg = g.generator(law)?;
    let out = lfg.sub(&f.mul(&lg)?)?.sub(&g.mul(&lf)?)?;
    Ok(out.scale(0.5))
}

/// `Γ(Q_p(f), Q_q(g)) = sum_k (p + q - k)/2 J_k(FG)`, built from the exact
/// decomposition of the product.
pub fn carre_du_champ(f: &Kernel, g: &Kernel, law: &RademacherLaw) -> Result<ChaosDecomposition> {
    let s = (f.order() + g.order()) as f64;
    Ok(product_decomposition(f, g, law)?.map_orders(|k| (s - k as f64) / 2.0))
}

/// Exact chaos decomposition of `Q_p(f) Q_q(g)`.
pub fn product_decomposition(f: &Kernel, g: &Kernel, law: &RademacherLaw) -> Result<ChaosDecomposition> {
    let prod = q_table(f, law)?.mul(&q_table(g, law)?)?;
    walsh_decompose(&prod, law)
}

/// Both sides of `Var Γ(F, G) = sum_k (p+q-k)^2/4 Var J_k(FG) <= max(p, q)^2 sum_k Var J_k(FG)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarGamma {
    pub exact: f64,
    pub bound: f64,
    /// `sum_{k>=1} Var J_k(FG)`.
    pub projection_variance: f64,
}

pub fn var_gamma(f: &Kernel, g: &Kernel, law: &RademacherLaw) -> Result<VarGamma> {
    let prod = product_decomposition(f, g, law)?;
    let s = (f.order() + g.order()) as f64;
    let m = f.order().max(g.order()) as f64;
    let projection_variance = prod.variance();
    let exact = prod.map_orders(|k| (s - k as f64) / 2.0).variance();
    Ok(VarGamma {
        exact,
        bound: m * m * projection_variance,
        projection_variance,
    })
}

/// One draw of `X^t` given `X = x`. Coordinate `k` uses the stream
/// `derive_seed(seed, k)` to draw its clock `θ_k ~ Exp(1)` and, when
/// `θ_k < t`, a fresh value from the law.
pub fn couple_sample(x: u64, t: f64, law: &RademacherLaw, seed: u64) -> Result<u64> {
    check_time(t)?;
    if law.dim() > 64 {
        return input("bitmask atoms support at most 64 coordinates");
    }
    let mut out = x;
    for k in 0..law.dim() {
        let mut rng = stream(seed, k as u64);
        let theta: f64 = rng.sample(Exp1);
        if theta < t {
            let plus = rng.random::<f64>() < law.p(k);
            out = if plus { out | 1 << k } else { out & !(1 << k) };
        }
    }
    Ok(out)
}

/// Draws `X` from the law using the stream `derive_seed(seed, index)`.
pub fn sample_atom(law: &RademacherLaw, seed: u64, index: u64) -> u64 {
    let mut rng = stream(seed, index);
    (0..law.dim()).fold(0u64, |x, k| {
        if rng.random::<f64>() < law.p(k) {
            x | 1 << k
        } else {
            x
        }
    })
}

/// Per-coordinate statistics of the coupling at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlipStats {
    /// Frequency of `{X_k = +1, X^t_k = -1}`.
    pub down: Estimate,
    /// Frequency of `{X_k = -1, X^t_k = +1}`.
    pub up: Estimate,
    /// `(1 - e^{-t}) p_k q_k`, the common value of both.
    pub expected: f64,
    /// Frequency of `{X^t_k = +1}`, which should be `p_k`.
    pub marginal: Estimate,
}

/// Flip and marginal frequencies over `n` coupled pairs. Pair `i` draws its
/// base point and its clocks from streams derived from `derive_seed(seed, i)`.
pub fn flip_frequencies(law: &RademacherLaw, t: f64, n: usize, seed: u64) -> Result<Vec<FlipStats>> {
    check_time(t)?;
    if n == 0 {
        return input("sample count must be positive");
    }
    let dim = law.dim();
    let pairs: Vec<(u64, u64)> = (0..n as u64)
        .map(|i| {
            let si = derive_seed(seed, i);
            let x = sample_atom(law, si, dim as u64);
            couple_sample(x, t, law, si).map(|y| (x, y))
        })
        .collect::<Result<_>>()?;
    let keep = (-t).exp();
    Ok((0..dim)
        .map(|k| {
            let bit = |a: u64| a >> k & 1 == 1;
            FlipStats {
                down: Estimate::of(pairs.iter().map(|&(x, y)| f64::from(bit(x) && !bit(y)))),
                up: Estimate::of(pairs.iter().map(|&(x, y)| f64::from(!bit(x) && bit(y)))),
                expected: (1.0 - keep) * law.p(k) * law.q(k),
                marginal: Estimate::of(pairs.iter().map(|&(_, y)| f64::from(bit(y)))),
            }
        })
        .collect())
}

/// Largest pointwise gap between the coupling average `E[F(X^t) | X]` and
/// `P_t F` computed from the chaos decomposition.
pub fn mehler_check(f: &HypercubeFunction, t: f64, law: &RademacherLaw) -> Result<f64> {
    let mixed = f.mehler(t, law)?;
    let spectral = apply_pt(&walsh_decompose(f, law)?, t)?.to_function(law)?;
    Ok(mixed.max_abs_diff(&spectral))
}

/// Joint law of `(F(X), F(X^t))` and its deviation from symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeReport {
    /// Distinct values of `F`, ascending.
    pub values: Vec<f64>,
    /// `joint[i][j] = P(F = values[i], F_t = values[j])`.
    pub joint: Vec<Vec<f64>>,
    /// `max |joint[i][j] - joint[j][i]|`.
    pub max_asymmetry: f64,
    pub total_mass: f64,
}

impl ExchangeReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_asymmetry <= tol && (self.total_mass - 1.0).abs() <= tol
    }
}

/// Largest dimension accepted by [`exchangeability_check`] (the pair space has `4^N` atoms).
pub const PAIR_CAP: usize = 10;

pub fn exchangeability_check(f: &Kernel, t: f64, law: &RademacherLaw) -> Result<ExchangeReport> {
    check_time(t)?;
    let n = law.dim();
    if n > PAIR_CAP.min(crate::hypercube::exact_cap()) {
        return Err(crate::Error::Resource(format!(
            "pair enumeration needs dimension at most {PAIR_CAP}, got {n}"
        )));
    }
    check_cap(n)?;
    let table = q_table(f, law)?;
    let scale = table.max_abs().max(1.0);
    let mut values: Vec<f64> = table.values().to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * scale);
    let class = |v: f64| {
        let i = values.partition_point(|&u| u < v - 1e-9 * scale);
        i.min(values.len() - 1)
    };
    let ids: Vec<usize> = table.values().iter().map(|&v| class(v)).collect();
    // per-coordinate joint weights w_k[a][b] = π(a) (e^{-t} δ_ab + (1 - e^{-t}) π(b))
    let keep = (-t).exp();
    let w: Vec<[[f64; 2]; 2]> = (0..n)
        .map(|k| {
            let pi = [law.q(k), law.p(k)];
            let mut m = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    let stay = if a == b { keep } else { 0.0 };
                    m[a][b] = pi[a] * (stay + (1.0 - keep) * pi[b]);
                }
            }
            m
        })
        .collect();
    let m = values.len();
    let mut joint = vec![vec![0.0; m]; m];
    let atoms = 1usize << n;
    for x in 0..atoms {
        for y in 0..atoms {
            let mut p = 1.0;
            for (k, wk) in w.iter().enumerate() {
                p *= wk[x >> k & 1][y >> k & 1];
            }
            joint[ids[x]][ids[y]] += p;
        }
    }
    let mut max_asymmetry: f64 = 0.0;
    let mut total_mass = 0.0;
    for i in 0..m {
        for j in 0..m {
            total_mass += joint[i][j];
            max_asymmetry = max_asymmetry.max((joint[i][j] - joint[j][i]).abs());
        }
    }
    Ok(ExchangeReport {
        values,
        joint,
        max_asymmetry,
        total_mass,
    })
}

/// `ρ(F) = -4p E[F^4] + 12 E[F^2 Γ(F, F)]` from exact enumeration.
pub fn rho(f: &Kernel, law: &RademacherLaw) -> Result<f64> {
    let ft = q_table(f, law)?;
    let gamma = carre_du_champ(f, f, law)?.to_function(law)?;
    let f2 = ft.mul(&ft)?;
    let m4 = f2.moment(law, 2)?;
    let cross = f2.mul(&gamma)?.expect(law)?;
    Ok(-4.0 * f.order() as f64 * m4 + 12.0 * cross)
}

/// Exact regression quantities at one coupling time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionRow {
    pub t: f64,
    /// `|| t^{-1} E[F_t - F | X] + pF ||_2`.
    pub drift_dist: f64,
    /// `|| t^{-1} E[(F_t - F)^2 | X] - 2Γ(F, F) ||_2`.
    pub square_dist: f64,
    /// `t^{-1} E[(F_t - F)^4]`, via `4E[F^3 E[F_t - F | X]] + 6E[F^2 E[(F_t - F)^2 | X]]`.
    pub fourth_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionReport {
    pub rows: Vec<RegressionRow>,
    /// Exact limit of `fourth_rate`.
    pub rho: f64,
    /// Ratios `dist(t_i) / dist(t_{i+1})` for consecutive grid points.
    pub drift_ratios: Vec<f64>,
    pub square_ratios: Vec<f64>,
    /// Richardson extrapolations of `fourth_rate` from consecutive grid points,
    /// tagged with the smaller time.
    pub extrapolated: Vec<(f64, f64)>,
}

/// Evaluates the three regression conditions of the coupling on a grid of
/// times (sorted descending internally).
pub fn regression_check(f: &Kernel, law: &RademacherLaw, grid: &[f64]) -> Result<RegressionReport> {
    if grid.is_empty() {
        return input("empty time grid");
    }
    let mut grid = grid.to_vec();
    for &t in &grid {
        check_time(t)?;
        if t == 0.0 {
            return input("regression times must be positive");
        }
    }
    grid.sort_by(|a, b| b.total_cmp(a));
    let p = f.order() as f64;
    let ft = q_table(f, law)?;
    let f2 = ft.mul(&ft)?;
    let f3 = f2.mul(&ft)?;
    let two_gamma = carre_du_champ(f, f, law)?.to_function(law)?.scale(2.0);
    let l2 = |h: &HypercubeFunction| -> Result<f64> { Ok(h.moment(law, 2)?.sqrt()) };
    let mut rows = Vec::with_capacity(grid.len());
    for &t in &grid {
        let pf = ft.mehler(t, law)?;
        let pf2 = f2.mehler(t, law)?;
        let drift = pf.sub(&ft)?;
        // E[(F_t - F)^2 | X] = P_t(F^2) - 2 F P_t F + F^2
        let sq = pf2.sub(&ft.mul(&pf)?.scale(2.0))?.add(&f2)?;
        let drift_dist = l2(&drift.scale(1.0 / t).add(&ft.scale(p))?)?;
        let square_dist = l2(&sq.scale(1.0 / t).sub(&two_gamma)?)?;
        let fourth = 4.0 * f3.mul(&drift)?.expect(law)? + 6.0 * f2.mul(&sq)?.expect(law)?;
        rows.push(RegressionRow {
            t,
            drift_dist,
            square_dist,
            fourth_rate: fourth / t,
        });
    }
    let ratio = |a: f64, b: f64| if b == 0.0 { f64::NAN } else { a / b };
    let drift_ratios = rows.windows(2).map(|w| ratio(w[0].drift_dist, w[1].drift_dist)).collect();
    let square_ratios = rows.windows(2).map(|w| ratio(w[0].square_dist, w[1].square_dist)).collect();
    let extrapolated = rows
        .windows(2)
        .map(|w| {
            let r = w[0].t / w[1].t;
            (w[1].t, (r * w[1].fourth_rate - w[0].fourth_rate) / (r - 1.0))
        })
        .collect();
    Ok(RegressionReport {
        rows,
        rho: rho(f, law)?,
        drift_ratios,
        square_ratios,
        extrapolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    #[test]
    fn generator_and_semigroup_scale_chaoses() {
        let f = Kernel::from_entries(2, 3, [(vec![0, 1], 0.5)]).unwrap();
        let d = ChaosDecomposition::from_kernel(&f);
        let l = apply_l(&d);
        assert_eq!(l.kernel(2).unwrap().value_at(&[0, 1]).unwrap(), -1.0);
        assert_eq!(apply_l(&l).kernel(2).unwrap().value_at(&[0, 1]).unwrap(), 2.0);
        assert_eq!(apply_pt(&d, 0.0).unwrap(), d);
        let s = apply_pt(&apply_pt(&d, 0.3).unwrap(), 0.2).unwrap();
        assert!(s.max_abs_diff(&apply_pt(&d, 0.5).unwrap()) < 1e-16);
        assert!(apply_pt(&d, -1.0).is_err());
        let c = apply_l(&ChaosDecomposition::constant_only(3, 2.0));
        assert_eq!(c.constant(), 0.0);
    }

    #[test]
    fn gamma_of_coordinates() {
        let law = RademacherLaw::symmetric(2).unwrap();
        let e1 = Kernel::indicator(0, 2).unwrap();
        let e2 = Kernel::indicator(1, 2).unwrap();
        let g = carre_du_champ(&e1, &e1, &law).unwrap();
        assert!((g.constant() - 1.0).abs() < 1e-15 && g.max_order() == 0);
        let g = carre_du_champ(&e1, &e2, &law).unwrap();
        assert!(g.constant().abs() < 1e-15 && g.max_order() == 0);
    }

    #[test]
    fn spectral_and_pointwise_gamma_agree() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
        let law = gen::random_law(6, 0.1, 0.9, &mut rng).unwrap();
        let f = gen::random_sparse(2, 6, 0.6, &mut rng).unwrap();
        let g = gen::random_sparse(3, 6, 0.5, &mut rng).unwrap();
        let spectral = carre_du_champ(&f, &g, &law).unwrap().to_function(&law).unwrap();
        let (ft, gt) = (q_table(&f, &law).unwrap(), q_table(&g, &law).unwrap());
        let direct = gamma_pointwise(&ft, &gt, &law).unwrap();
        assert!(spectral.max_abs_diff(&direct) < 1e-10);
        let v = var_gamma(&f, &g, &law).unwrap();
        assert!(v.exact <= v.bound + 1e-12);
        let var_direct = spectral.moment(&law, 2).unwrap() - spectral.expect(&law).unwrap().powi(2);
        assert!((var_direct - v.exact).abs() < 1e-10);
    }

    #[test]
    fn zero_time_keeps_the_point() {
        let law = RademacherLaw::new(vec![0.3, 0.6, 0.5]).unwrap();
        for x in 0..8 {
            assert_eq!(couple_sample(x, 0.0, &law, 99).unwrap(), x);
        }
    }

    #[test]
    fn flip_frequencies_follow_the_clock() {
        let law = RademacherLaw::new(vec![0.7, 0.2]).unwrap();
        for s in flip_frequencies(&law, 0.5, 40_000, 1).unwrap() {
            assert!(s.down.within(s.expected, 4.0) && s.up.within(s.expected, 4.0));
        }
    }

    #[test]
    fn mehler_on_chaos_and_random_tables() {
        let law = RademacherLaw::new(vec![0.3, 0.6, 0.8, 0.45]).unwrap();
        let f = Kernel::from_entries(2, 4, [(vec![0, 2], 0.7), (vec![1, 3], -0.2)]).unwrap();
        let ft = q_table(&f, &law).unwrap();
        assert!(mehler_check(&ft, 0.4, &law).unwrap() < 1e-12);
        let rt = HypercubeFunction::from_fn(4, |x| ((x * 7 + 3) % 11) as f64).unwrap();
        assert!(mehler_check(&rt, 0.3, &law).unwrap() < 1e-10);
        assert!(mehler_check(&rt, 0.0, &law).unwrap() < 1e-12);
    }

    #[test]
    fn exchangeable_pairs() {
        let law = RademacherLaw::new(vec![0.7, 0.4]).unwrap();
        let e1 = Kernel::indicator(0, 2).unwrap();
        let r = exchangeability_check(&e1, 1.0, &law).unwrap();
        assert!(r.passed(1e-14));
        assert_eq!(r.values.len(), 2);
        let r0 = exchangeability_check(&e1, 0.0, &law).unwrap();
        assert_eq!(r0.joint[0][1], 0.0);
    }

    #[test]
    fn fourth_rate_of_single_sign() {
        let law = RademacherLaw::symmetric(1).unwrap();
        let e1 = Kernel::indicator(0, 1).unwrap();
        let rep = regression_check(&e1, &law, &[1e-2, 1e-3]).unwrap();
        assert!((rep.rho - 8.0).abs() < 1e-12);
        for row in &rep.rows {
            let want = 8.0 * (1.0 - (-row.t).exp()) / row.t;
            assert!((row.fourth_rate - want).abs() < 1e-9);
        }
    }
}
