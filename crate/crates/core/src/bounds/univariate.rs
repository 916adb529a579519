use std::collections::BTreeMap;

use statrs::function::factorial::ln_binomial;

use super::{c1, c2, constants, fitted_law, require_normalized, self_contraction_norms, BoundReport};
use crate::chaos::q_table;
use crate::error::{input, Error, Result};
use crate::gaussian::{empirical_w1_bootstrap, kolmogorov_to_normal, merge_atoms, w1_to_normal};
use crate::hypercube::{check_cap, exact_cap};
use crate::kernel::Kernel;
use crate::law::RademacherLaw;
use crate::sampling::{derive_seed, moment_estimate, sample_q, Estimate, InputLaw, SamplerSpec, Stat};

/// Sampling settings used when the hypercube is too large to enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fallback {
    pub samples: usize,
    pub seed: u64,
    /// Bootstrap replicates for the error bar of the sampled distance.
    pub bootstrap: usize,
}

impl Default for Fallback {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            seed: 0,
            bootstrap: 200,
        }
    }
}

/// Exact 1-Wasserstein distance between the law of `Q_p(f; Y)` and `N(0, 1)`.
pub fn wasserstein_exact(f: &Kernel, law: &RademacherLaw) -> Result<f64> {
    let law = fitted_law(f.dim(), law)?;
    check_cap(law.dim())?;
    w1_to_normal(&q_table(f, &law)?.atoms(&law)?)
}

/// Bound `C1 √|E F^4 - 3| + C2 √M(f)` for a normalised kernel, with the
/// distance it controls. Moments and distance are exact within the exact cap
/// and sampled beyond it.
pub fn dw_bound_univariate(f: &Kernel, law: &RademacherLaw, fallback: &Fallback) -> Result<BoundReport> {
    require_normalized(f)?;
    let law = fitted_law(f.dim(), law)?;
    let p = f.order();
    let mut notes = Vec::new();
    let (second, fourth, cumulant, lhs) = if law.dim() <= exact_cap() {
        let atoms = q_table(f, &law)?.atoms(&law)?;
        let m2: f64 = atoms.iter().map(|(v, w)| w * v * v).sum();
        let m4: f64 = atoms.iter().map(|(v, w)| w * v.powi(4)).sum();
        (
            Stat::Exact(m2),
            Stat::Exact(m4),
            Stat::Exact(m4 - 3.0 * m2 * m2),
            Stat::Exact(w1_to_normal(&atoms)?),
        )
    } else {
        let spec = SamplerSpec::new(InputLaw::Rademacher(law.clone()), fallback.seed);
        let xs = sample_q(f, &spec, fallback.samples)?;
        let m4 = moment_estimate(&xs, 4);
        let w1 = empirical_w1_bootstrap(&xs, fallback.bootstrap, derive_seed(fallback.seed, u64::MAX))?;
        notes.push(format!(
            "{} coordinates exceed the exact cap; moments and distance sampled",
            law.dim()
        ));
        (
            Stat::Sampled(moment_estimate(&xs, 2)),
            Stat::Sampled(m4),
            // E F^2 = 1 exactly by normalisation
            Stat::Sampled(Estimate {
                value: m4.value - 3.0,
                se: m4.se,
            }),
            Stat::Sampled(w1),
        )
    };
    let influence = f.max_influence();
    let rhs = c1() * cumulant.value().abs().sqrt() + c2(p)? * influence.sqrt();
    Ok(BoundReport {
        order: p,
        second_moment: second,
        fourth_moment: fourth,
        fourth_cumulant: cumulant,
        influence,
        contraction_norms: self_contraction_norms(f)?,
        lhs: Some(lhs),
        rhs,
        constants: constants(p)?,
        notes,
    })
}

/// Fourth-moment bound available when every `p_k` equals the same `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousBound {
    pub p: f64,
    /// `(p^2 + q^2 - 4pq) / (pq)`.
    pub coefficient: f64,
    /// `coefficient * sum h^4`, which equals `E F^4 - 3`.
    pub cumulant: f64,
    /// `√((E F^4 - 3) / (p^2 + q^2 - 4pq))`; `None` when the denominator is
    /// below `1e-9` in absolute value.
    pub dw_from_cumulant: Option<f64>,
}

/// Exact quantities for `F = Q_1(h; Y)` with `||h|| = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstChaosReport {
    /// `rhs` is `√(sum h^4 / (pq))`, `lhs` the exact Wasserstein distance.
    pub report: BoundReport,
    /// `3 + sum h^4 (q-p)^2/(pq) - 2 sum h^4`.
    pub fourth_formula: f64,
    /// Fourth moment of the exact law of `F`.
    pub fourth_law: f64,
    /// Fourth moment by hypercube enumeration, within the exact cap.
    pub fourth_enumerated: Option<f64>,
    pub kolmogorov: f64,
    /// `2 √(sum h^4 / (pq))`.
    pub kolmogorov_bound: f64,
    /// `√2 √|E F^4 - 3| + 2√2 √M(h)`.
    pub dw_influence_bound: f64,
    /// `2√2 √|E F^4 - 3| + 4√2 √M(h)`.
    pub kolmogorov_influence_bound: f64,
    pub homogeneous: Option<HomogeneousBound>,
}

/// Exact law of `Q_1(h; Y)` as sorted `(value, probability)` atoms.
///
/// Coordinates sharing both `h_k` and `p_k` are summed as one binomial count,
/// so kernels with few distinct coefficient/probability pairs stay cheap at
/// any dimension. Fails with a resource error past `2^24` atoms.
pub fn first_chaos_atoms(h: &Kernel, law: &RademacherLaw) -> Result<Vec<(f64, f64)>> {
    if h.order() != 1 {
        return input("first-chaos law needs an order-1 kernel");
    }
    let law = fitted_law(h.dim(), law)?;
    let mut groups: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    for (key, v) in h.iter() {
        *groups.entry((v.to_bits(), law.p(key[0]).to_bits())).or_insert(0) += 1;
    }
    let mut dist = vec![(0.0, 1.0)];
    for ((hb, pb), count) in groups {
        let (c, p) = (f64::from_bits(hb), f64::from_bits(pb));
        let q = 1.0 - p;
        let (up, down) = ((q / p).sqrt(), -(p / q).sqrt());
        let group: Vec<(f64, f64)> = (0..=count)
            .map(|k| {
                let lp = ln_binomial(count as u64, k as u64) + k as f64 * p.ln() + (count - k) as f64 * q.ln();
                (c * (k as f64 * up + (count - k) as f64 * down), lp.exp())
            })
            .collect();
        if dist.len().saturating_mul(group.len()) > 1 << 24 {
            return Err(Error::Resource(
                "first-chaos law has more than 2^24 atoms".into(),
            ));
        }
        let mut next = Vec::with_capacity(dist.len() * group.len());
        for &(x, px) in &dist {
            for &(y, py) in &group {
                next.push((x + y, px * py));
            }
        }
        dist = merge_atoms(&next);
    }
    Ok(dist)
}

/// Direct first-chaos formulas for the fourth moment and the Wasserstein and
/// Kolmogorov distances, checked against the exact law.
pub fn first_chaos_exact(h: &Kernel, law: &RademacherLaw) -> Result<FirstChaosReport> {
    if h.order() != 1 {
        return input("first-chaos formulas need an order-1 kernel");
    }
    if (h.norm_sq() - 1.0).abs() > 1e-10 {
        return input(format!("first-chaos kernel must have unit norm, got {}", h.norm_sq()));
    }
    let law = fitted_law(h.dim(), law)?;
    let (mut s4, mut weighted, mut tilted) = (0.0, 0.0, 0.0);
    for (key, v) in h.iter() {
        let (p, q) = (law.p(key[0]), law.q(key[0]));
        let v4 = v.powi(4);
        s4 += v4;
        weighted += v4 / (p * q);
        tilted += v4 * (q - p).powi(2) / (p * q);
    }
    let fourth_formula = 3.0 + tilted - 2.0 * s4;
    let cumulant = fourth_formula - 3.0;
    let atoms = first_chaos_atoms(h, &law)?;
    let fourth_law = atoms.iter().map(|(v, w)| w * v.powi(4)).sum();
    let fourth_enumerated = if law.dim() <= exact_cap() {
        Some(q_table(h, &law)?.moment(&law, 4)?)
    } else {
        None
    };
    let influence = h.max_influence();
    let dw_bound = weighted.sqrt();
    let homogeneous = homogeneous_bound(h, &law, s4);
    let mut notes = Vec::new();
    if let Some(hb) = &homogeneous {
        if hb.dw_from_cumulant.is_none() {
            notes.push(format!(
                "p = {} makes p^2 + q^2 - 4pq vanish; the fourth-moment bound is inapplicable",
                hb.p
            ));
        }
    }
    let report = BoundReport {
        order: 1,
        second_moment: Stat::Exact(atoms.iter().map(|(v, w)| w * v * v).sum()),
        fourth_moment: Stat::Exact(fourth_formula),
        fourth_cumulant: Stat::Exact(cumulant),
        influence,
        contraction_norms: BTreeMap::new(),
        lhs: Some(Stat::Exact(w1_to_normal(&atoms)?)),
        rhs: dw_bound,
        constants: constants(1)?,
        notes,
    };
    let r2 = std::f64::consts::SQRT_2;
    Ok(FirstChaosReport {
        report,
        fourth_formula,
        fourth_law,
        fourth_enumerated,
        kolmogorov: kolmogorov_to_normal(&atoms)?,
        kolmogorov_bound: 2.0 * dw_bound,
        dw_influence_bound: r2 * cumulant.abs().sqrt() + 2.0 * r2 * influence.sqrt(),
        kolmogorov_influence_bound: 2.0 * r2 * cumulant.abs().sqrt() + 4.0 * r2 * influence.sqrt(),
        homogeneous,
    })
}

fn homogeneous_bound(h: &Kernel, law: &RademacherLaw, s4: f64) -> Option<HomogeneousBound> {
    let mut ps = h.iter().map(|(key, _)| law.p(key[0]));
    let p = ps.next()?;
    if ps.any(|x| x != p) {
        return None;
    }
    let q = 1.0 - p;
    let denom = p * p + q * q - 4.0 * p * q;
    let coefficient = denom / (p * q);
    let cumulant = coefficient * s4;
    let dw_from_cumulant = (denom.abs() >= 1e-9).then(|| (cumulant / denom).sqrt());
    Some(HomogeneousBound {
        p,
        coefficient,
        cumulant,
        dw_from_cumulant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::gamma_p;
    use crate::gen;
    use proptest::prelude::*;

    #[test]
    fn single_sign_bound() {
        let law = RademacherLaw::symmetric(1).unwrap();
        let f = Kernel::indicator(0, 1).unwrap();
        let r = dw_bound_univariate(&f, &law, &Fallback::default()).unwrap();
        assert!((r.fourth_cumulant.value() + 2.0).abs() < 1e-14);
        assert_eq!(r.influence, 1.0);
        let expected = c1() * 2f64.sqrt() + c2(1).unwrap();
        assert!((r.rhs - expected).abs() < 1e-12);
        assert!(r.check(0.0).unwrap().holds(0.0));
    }

    #[test]
    fn counterexample_influence_term_is_fixed() {
        let law = RademacherLaw::symmetric(10).unwrap();
        let f = gen::counterexample(2, 10).unwrap();
        let r = dw_bound_univariate(&f, &law, &Fallback::default()).unwrap();
        assert!((r.influence - 0.25).abs() < 1e-15);
        let infl_term = c2(2).unwrap() * r.influence.sqrt();
        assert!((infl_term - c2(2).unwrap() / 2.0).abs() < 1e-12);
        assert_eq!(r.constants[0].value, gamma_p(2).unwrap());
    }

    #[test]
    fn rejects_unnormalised_kernel() {
        let law = RademacherLaw::symmetric(3).unwrap();
        let f = Kernel::from_entries(2, 3, [(vec![0, 1], 1.0)]).unwrap();
        assert!(dw_bound_univariate(&f, &law, &Fallback::default()).is_err());
        assert!(first_chaos_exact(&Kernel::first_order(&[1.0, 1.0]).unwrap(), &law).is_err());
    }

    #[test]
    fn point_mass_and_sign_distances() {
        let law = RademacherLaw::symmetric(2).unwrap();
        let f = Kernel::indicator(1, 2).unwrap();
        let w = wasserstein_exact(&f, &law).unwrap();
        let sign = w1_to_normal(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        assert!((w - sign).abs() < 1e-15);
    }

    #[test]
    fn single_coordinate_first_chaos() {
        let law = RademacherLaw::symmetric(1).unwrap();
        let r = first_chaos_exact(&Kernel::indicator(0, 1).unwrap(), &law).unwrap();
        assert!((r.fourth_formula - 1.0).abs() < 1e-15);
        assert!((r.report.rhs - 2.0).abs() < 1e-15);
        assert!((r.fourth_enumerated.unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn uniform_first_chaos() {
        let m = 12;
        let law = RademacherLaw::symmetric(m).unwrap();
        let r = first_chaos_exact(&gen::uniform_first_order(m).unwrap(), &law).unwrap();
        assert!((r.fourth_formula - 3.0 + 2.0 / m as f64).abs() < 1e-14);
        assert!((r.report.rhs - 2.0 / (m as f64).sqrt()).abs() < 1e-14);
        assert!((r.fourth_law - r.fourth_formula).abs() < 1e-12);
        assert!((r.fourth_enumerated.unwrap() - r.fourth_formula).abs() < 1e-12);
        assert!(r.report.lhs.unwrap().value() <= r.report.rhs);
        assert!(r.kolmogorov <= r.kolmogorov_bound);
    }

    #[test]
    fn grouped_law_scales_past_the_cap() {
        let n = 4096;
        let law = RademacherLaw::symmetric(n).unwrap();
        let r = first_chaos_exact(&gen::uniform_first_order(n).unwrap(), &law).unwrap();
        assert!(r.fourth_enumerated.is_none());
        assert!((r.fourth_law - r.fourth_formula).abs() < 1e-10);
    }

    #[test]
    fn degenerate_homogeneous_law_is_flagged() {
        let p = 0.5 - 0.5 / 3f64.sqrt();
        let law = RademacherLaw::homogeneous(4, p).unwrap();
        let r = first_chaos_exact(&gen::uniform_first_order(4).unwrap(), &law).unwrap();
        let hb = r.homogeneous.unwrap();
        assert!(hb.dw_from_cumulant.is_none());
        assert!(hb.cumulant.abs() < 1e-12);
        assert_eq!(r.report.notes.len(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn first_chaos_formula_matches_enumeration(
            coeffs in proptest::collection::vec(-1.0f64..1.0, 1..9),
            probs in proptest::collection::vec(0.1f64..0.9, 8),
        ) {
            prop_assume!(coeffs.iter().any(|c| c.abs() > 1e-3));
            let n = coeffs.len();
            let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
            let h = Kernel::first_order(&coeffs.iter().map(|c| c / norm).collect::<Vec<_>>()).unwrap();
            let law = RademacherLaw::new(probs[..n].to_vec()).unwrap();
            let r = first_chaos_exact(&h, &law).unwrap();
            prop_assert!((r.fourth_enumerated.unwrap() - r.fourth_formula).abs() < 1e-10);
            prop_assert!((r.fourth_law - r.fourth_formula).abs() < 1e-10);
            prop_assert!(r.report.lhs.unwrap().value() <= r.report.rhs + 1e-12);
            prop_assert!(r.kolmogorov <= r.kolmogorov_bound + 1e-12);
            prop_assert!(r.report.rhs <= r.dw_influence_bound + 1e-12);
        }

        #[test]
        fn homogeneous_cumulant_uses_squared_q(
            coeffs in proptest::collection::vec(0.05f64..1.0, 1..7),
            p in 0.1f64..0.9,
        ) {
            let n = coeffs.len();
            let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
            let h = Kernel::first_order(&coeffs.iter().map(|c| c / norm).collect::<Vec<_>>()).unwrap();
            let law = RademacherLaw::homogeneous(n, p).unwrap();
            let r = first_chaos_exact(&h, &law).unwrap();
            let hb = r.homogeneous.unwrap();
            prop_assert!((hb.cumulant - (r.fourth_enumerated.unwrap() - 3.0)).abs() < 1e-10);
            if let Some(b) = hb.dw_from_cumulant {
                prop_assert!((b - r.report.rhs).abs() < 1e-8 * r.report.rhs.max(1.0));
            }
        }
    }
}
