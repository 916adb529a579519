use super::{
    fitted_law, gamma_p, leak_bound, offdiag_leak_sq, projection_inner, projection_variance, require_normalized,
    Check,
};
use crate::chaos::{q_table, walsh_decompose, ChaosDecomposition};
use crate::comb::{binomial, factorial};
use crate::error::{input, Result};
use crate::hypercube::{check_cap, HypercubeFunction};
use crate::kernel::{contract_blocks, contraction_norm_sq, sym_contract, sym_contract_diagonal, sym_offdiag_product, Kernel};
use crate::law::RademacherLaw;
use crate::ou::{gamma_pointwise, rho, var_gamma};

/// Evaluated inequalities and identities.
#[derive(Debug, Clone, PartialEq)]
pub struct TechReport {
    pub checks: Vec<Check>,
}

impl TechReport {
    pub fn all_hold(&self, tol: f64) -> bool {
        self.checks.iter().all(|c| c.holds(tol))
    }
}

/// Both kernels on a common coordinate range, the fitted law, and value tables.
struct Pair {
    f: Kernel,
    g: Kernel,
    law: RademacherLaw,
    ft: HypercubeFunction,
    gt: HypercubeFunction,
}

impl Pair {
    fn new(f: &Kernel, g: &Kernel, law: &RademacherLaw) -> Result<Self> {
        let n = f.dim().max(g.dim());
        let law = fitted_law(n, law)?;
        check_cap(n)?;
        let (f, g) = (f.with_dim(n)?, g.with_dim(n)?);
        let ft = q_table(&f, &law)?;
        let gt = q_table(&g, &law)?;
        Ok(Self { f, g, law, ft, gt })
    }
}

/// Single-kernel quantities shared by several estimates.
struct Single {
    m2: f64,
    m4: f64,
    square: ChaosDecomposition,
    /// `sum_{k < 2p} Var J_k(F^2)`.
    below_top: f64,
    /// `p!^2 sum_{r=1}^{p-1} C(p,r)^2 ||f ⊗_r f||^2`.
    contractions: f64,
    /// `(2p)! ||(f ⊗̃ f) 1_{Δ^c}||^2`.
    leak: f64,
}

impl Single {
    fn new(f: &Kernel, ft: &HypercubeFunction, law: &RademacherLaw) -> Result<Self> {
        let p = f.order();
        let f2 = ft.mul(ft)?;
        let square = walsh_decompose(&f2, law)?;
        let mut contractions = 0.0;
        for r in 1..p {
            contractions += factorial(p).powi(2) * binomial(p, r).powi(2) * contraction_norm_sq(f, f, r)?;
        }
        Ok(Self {
            m2: ft.moment(law, 2)?,
            m4: ft.moment(law, 4)?,
            below_top: projection_variance(&square, 2 * p),
            square,
            contractions,
            leak: factorial(2 * p) * offdiag_leak_sq(f, f)?,
        })
    }

    fn cumulant(&self) -> f64 {
        self.m4 - 3.0 * self.m2 * self.m2
    }

    /// `E F^4 - 3 E[F^2]^2 + γ E[F^2] M(f)` with the given `γ`.
    fn influence_side(&self, gamma: f64, f: &Kernel) -> f64 {
        self.cumulant() + gamma * self.m2 * f.max_influence()
    }
}

/// All three estimates of the technical lemma for `F = Q_p(f)`, `G = Q_q(g)`,
/// together with the identities behind them, by exact enumeration.
pub fn lemma_tech1_sides(f: &Kernel, g: &Kernel, law: &RademacherLaw) -> Result<TechReport> {
    let Pair { f, g, law, ft, gt } = Pair::new(f, g, law)?;
    let (p, q) = (f.order(), g.order());
    let fg = ft.mul(&gt)?;
    let prod = walsh_decompose(&fg, &law)?;
    let efg = fg.expect(&law)?;
    let e_f2g2 = fg.moment(&law, 2)?;
    let var_f = ft.moment(&law, 2)? - ft.expect(&law)?.powi(2);
    let var_g = gt.moment(&law, 2)? - gt.expect(&law)?.powi(2);
    let below = projection_variance(&prod, p + q);
    let leak_fg = offdiag_leak_sq(&f, &g)?;
    let top = factorial(p + q) * sym_offdiag_product(&f, &g)?.norm_sq();
    let mut checks = vec![
        Check::at_most(
            "product projections",
            below,
            e_f2g2 - 2.0 * efg * efg - var_f * var_g + factorial(p + q) * leak_fg,
        ),
        Check::equal("step-1 identity", e_f2g2, efg * efg + below + top),
    ];

    for (name, h, ht) in [("f", &f, &ft), ("g", &g, &gt)] {
        let s = Single::new(h, ht, &law)?;
        let rhs = s.cumulant() + s.leak;
        checks.push(Check::at_most(format!("square projections ({name})"), s.below_top, rhs));
        checks.push(Check::at_most(format!("square contractions ({name})"), s.contractions, rhs));
        checks.push(Check::equal(
            format!("square projection identity ({name})"),
            s.below_top,
            s.cumulant() - s.contractions + s.leak,
        ));
        checks.push(Check::at_most(
            format!("diagonal leak ({name},{name})"),
            offdiag_leak_sq(h, h)?,
            leak_bound(h, h),
        ));
    }
    checks.push(Check::at_most("diagonal leak (f,g)", leak_fg, leak_bound(&f, &g)));

    let full = factorial(p + q) * sym_contract(&f, &g, 0)?.norm_sq();
    let mut expansion = 0.0;
    for r in 0..=p.min(q) {
        expansion += factorial(p) * factorial(q) * binomial(p, r) * binomial(q, r) * contraction_norm_sq(&f, &g, r)?;
    }
    checks.push(Check::equal("tensor norm expansion", full, expansion));
    let cross = if p == q { factorial(p).powi(2) * f.inner(&g)?.powi(2) } else { 0.0 };
    checks.push(Check::at_most(
        "tensor norm lower bound",
        factorial(p) * factorial(q) * f.norm_sq() * g.norm_sq() + cross,
        full,
    ));
    for r in 1..=p.min(q) {
        let lhs = contraction_norm_sq(&f, &g, r)?;
        let rhs = contract_blocks(&f, &f, p - r)?.inner(&contract_blocks(&g, &g, q - r)?)?;
        checks.push(Check::equal(format!("contraction norm swap (r={r})"), lhs, rhs));
    }

    let vg = var_gamma(&f, &g, &law)?;
    let pointwise = gamma_pointwise(&ft, &gt, &law)?;
    let pointwise_var = pointwise.moment(&law, 2)? - pointwise.expect(&law)?.powi(2);
    checks.push(Check::equal("gamma variance identity", vg.exact, pointwise_var));
    checks.push(Check::at_most("gamma variance bound", vg.exact, vg.bound));
    Ok(TechReport { checks })
}

/// Variance estimates for `Γ(F, F)` and the fourth-moment rate `ρ(F)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UseReport {
    pub var_gamma_scaled: f64,
    pub gamma_p: f64,
    /// `E[F^2 Γ(F, F)]`.
    pub cross_moment: f64,
    pub rho: f64,
    pub checks: Vec<Check>,
}

impl UseReport {
    pub fn all_hold(&self, tol: f64) -> bool {
        self.checks.iter().all(|c| c.holds(tol))
    }
}

/// Exact sides of the variance bounds on `Γ(F, F)` for a normalised kernel.
pub fn use_bounds(f: &Kernel, law: &RademacherLaw) -> Result<UseReport> {
    require_normalized(f)?;
    let law = fitted_law(f.dim(), law)?;
    check_cap(law.dim())?;
    let p = f.order();
    let pf = p as f64;
    let ft = q_table(f, &law)?;
    let s = Single::new(f, &ft, &law)?;
    let gamma = s.square.map_orders(|k| (2 * p - k.min(2 * p)) as f64 / 2.0);
    let var_gamma_scaled = gamma.variance() / (pf * pf);
    let gp = gamma_p(p)?;
    let m = f.max_influence();
    let cross_moment = ft.mul(&ft)?.mul(&gamma.to_function(&law)?)?.expect(&law)?;
    let rho_value = -4.0 * pf * s.m4 + 12.0 * cross_moment;
    let checks = vec![
        Check::at_most("Var(Γ/p) <= sum Var J_k(F^2)", var_gamma_scaled, s.below_top),
        Check::at_most("sum Var J_k(F^2) <= κ4 + leak", s.below_top, s.cumulant() + s.leak),
        Check::at_most("leak <= γ_p E[F^2] M", s.leak, gp * s.m2 * m),
        Check::at_most("gamma variance influence bound", var_gamma_scaled, s.influence_side(gp, f)),
        Check::at_most(
            "cross moment bound",
            3.0 * cross_moment - pf * s.m4,
            2.0 * pf * (s.m4 - 3.0) + 3.0 * pf * gp * m,
        ),
        Check::at_most("rho >= 0", 0.0, rho_value),
        Check::at_most("rho bound", rho_value, 8.0 * pf * (s.m4 - 3.0) + 12.0 * pf * gp * m),
        Check::equal("rho routes", rho_value, rho(f, &law)?),
    ];
    Ok(UseReport {
        var_gamma_scaled,
        gamma_p: gp,
        cross_moment,
        rho: rho_value,
        checks,
    })
}

/// Decomposition of `Cov(F^2, G^2) - 2E[FG]^2` for `p <= q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Step2Report {
    pub equal_orders: bool,
    /// Exact `Cov(F^2, G^2) - 2E[FG]^2`.
    pub target: f64,
    /// Cross-projection, mixed-contraction and diagonal-correction terms,
    /// when `p = q`.
    pub terms: Option<[f64; 3]>,
    pub checks: Vec<Check>,
}

impl Step2Report {
    pub fn all_hold(&self, tol: f64) -> bool {
        self.checks.iter().all(|c| c.holds(tol))
    }
}

/// The three-term split of `Cov(F^2, G^2) - 2E[FG]^2` and the bound on each
/// term; for `p < q` the single covariance bound.
pub fn step2_covariance_terms(f: &Kernel, g: &Kernel, law: &RademacherLaw) -> Result<Step2Report> {
    if f.order() > g.order() {
        return input(format!(
            "covariance terms need p <= q, got p = {}, q = {}",
            f.order(),
            g.order()
        ));
    }
    let Pair { f, g, law, ft, gt } = Pair::new(f, g, law)?;
    let q = g.order();
    let sf = Single::new(&f, &ft, &law)?;
    let sg = Single::new(&g, &gt, &law)?;
    let fg = ft.mul(&gt)?;
    let efg = fg.expect(&law)?;
    let cov = fg.moment(&law, 2)? - sf.m2 * sg.m2;
    let target = cov - 2.0 * efg * efg;
    let gq = gamma_p(q)?;
    let a_f = sf.influence_side(gq, &f);
    let a_g = sg.influence_side(gq, &g);
    let mut checks = Vec::new();

    if f.order() < q {
        checks.push(Check::equal("E[FG] = 0", efg, 0.0));
        let cs = sf.m4.sqrt() * sg.below_top.sqrt();
        checks.push(Check::at_most("cov Cauchy-Schwarz", cov.abs(), cs));
        checks.push(Check::at_most("cov influence bound", cs, sf.m4.sqrt() * a_g.sqrt()));
        return Ok(Step2Report {
            equal_orders: false,
            target,
            terms: None,
            checks,
        });
    }

    let term1 = projection_inner(&sf.square, &sg.square, 2 * q)?;
    let mut term2 = 0.0;
    let mut mixed_norms = 0.0;
    let mut fact0 = 0.0;
    for r in 1..q {
        let w = factorial(q).powi(2) * binomial(q, r).powi(2);
        let fg_r = contract_blocks(&f, &g, r)?;
        term2 += w * fg_r.inner(&contract_blocks(&g, &f, r)?)?;
        mixed_norms += w * fg_r.norm_sq();
        fact0 += w * contract_blocks(&f, &f, q - r)?.inner(&contract_blocks(&g, &g, q - r)?)?;
    }
    let term3 = -factorial(2 * q) * sym_contract_diagonal(&f, &f, 0)?.diag_inner(&sym_contract_diagonal(&g, &g, 0)?);
    let leak_g = offdiag_leak_sq(&g, &g)?;
    let third_bound = f.norm_sq() * factorial(2 * q) * leak_g.sqrt();
    let third_final = f.norm_sq() * (factorial(2 * q) * gq * sg.m2 * g.max_influence()).sqrt();
    let hi = (a_f * a_g).sqrt();
    checks.extend([
        Check::equal("three-term split", term1 + term2 + term3, target),
        Check::at_most("term 1 Cauchy-Schwarz", term1, (sf.below_top * sg.below_top).sqrt()),
        Check::at_most("term 1", (sf.below_top * sg.below_top).sqrt(), hi),
        Check::at_most("term 2 <= contraction norms", term2, mixed_norms),
        Check::equal("contraction norm swap", mixed_norms, fact0),
        Check::at_most("contraction Cauchy-Schwarz", mixed_norms, (sf.contractions * sg.contractions).sqrt()),
        Check::at_most("contraction influence bound", (sf.contractions * sg.contractions).sqrt(), hi),
        Check::at_most("term 3", term3.abs(), third_bound),
        Check::at_most("term 3 influence", third_bound, third_final),
        Check::at_most("step 2 combined", target.abs(), 2.0 * hi + third_final),
    ]);
    Ok(Step2Report {
        equal_orders: true,
        target,
        terms: Some([term1, term2, term3]),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn assert_holds(checks: &[Check]) {
        for c in checks {
            assert!(c.holds(1e-10), "{c}");
        }
    }

    #[test]
    fn single_sign_is_tight() {
        let law = RademacherLaw::symmetric(1).unwrap();
        let e = Kernel::indicator(0, 1).unwrap();
        let r = lemma_tech1_sides(&e, &e, &law).unwrap();
        assert_holds(&r.checks);
        let lem2 = r.checks.iter().find(|c| c.name == "square projections (f)").unwrap();
        assert!(lem2.lhs.abs() < 1e-15 && lem2.rhs.abs() < 1e-14);
        let u = use_bounds(&e, &law).unwrap();
        assert!(u.var_gamma_scaled.abs() < 1e-15);
        assert!((u.rho - 8.0).abs() < 1e-12);
        let bound = u.checks.iter().find(|c| c.name == "gamma variance influence bound").unwrap();
        assert!(bound.rhs.abs() < 1e-14);
    }

    #[test]
    fn mixed_orders_on_biased_law() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
        let law = gen::random_law(8, 0.1, 0.9, &mut rng).unwrap();
        let f = gen::random_sparse(2, 8, 0.6, &mut rng).unwrap();
        let g = gen::random_sparse(1, 8, 0.8, &mut rng).unwrap();
        assert_holds(&lemma_tech1_sides(&f, &g, &law).unwrap().checks);
        assert_holds(&step2_covariance_terms(&g, &f, &law).unwrap().checks);
    }

    #[test]
    fn disjoint_first_order_leak() {
        let law = RademacherLaw::symmetric(4).unwrap();
        let f = Kernel::first_order(&[0.6, 0.8, 0.0, 0.0]).unwrap();
        let g = Kernel::first_order(&[0.0, 0.0, 0.3, 0.4]).unwrap();
        assert_eq!(offdiag_leak_sq(&f, &g).unwrap(), 0.0);
        let direct = f.iter().map(|(_, v)| v.powi(4)).sum::<f64>();
        assert!((offdiag_leak_sq(&f, &f).unwrap() - direct).abs() < 1e-15);
        assert_holds(&lemma_tech1_sides(&f, &g, &law).unwrap().checks);
    }

    #[test]
    fn disjoint_equal_orders_drop_mixed_terms() {
        let law = RademacherLaw::symmetric(8).unwrap();
        let f = Kernel::from_entries(2, 8, [(vec![0, 1], 0.3), (vec![1, 2], -0.2)]).unwrap();
        let g = Kernel::from_entries(2, 8, [(vec![4, 5], 0.5), (vec![5, 7], 0.1)]).unwrap();
        let r = step2_covariance_terms(&f, &g, &law).unwrap();
        let [t1, t2, t3] = r.terms.unwrap();
        assert_eq!(t2, 0.0);
        assert!((t1 + t3 - r.target).abs() < 1e-12);
        assert_holds(&r.checks);
    }

    #[test]
    fn equal_kernels_reduce_to_single_quantities() {
        let law = RademacherLaw::symmetric(7).unwrap();
        let f = gen::counterexample(2, 7).unwrap();
        let r = step2_covariance_terms(&f, &f, &law).unwrap();
        assert_holds(&r.checks);
        let ft = q_table(&f, &law).unwrap();
        let s = Single::new(&f, &ft, &law).unwrap();
        let [t1, t2, _] = r.terms.unwrap();
        assert!((t1 - s.below_top).abs() < 1e-12);
        assert!((t2 - s.contractions).abs() < 1e-12);
        assert!(use_bounds(&f, &law).unwrap().all_hold(1e-10));
    }

    #[test]
    fn order_requirements() {
        let law = RademacherLaw::symmetric(4).unwrap();
        let f = gen::full_support(2, 4).unwrap();
        let h = Kernel::indicator(0, 4).unwrap();
        assert!(step2_covariance_terms(&f, &h, &law).is_err());
        assert!(use_bounds(&f.scaled(2.0), &law).is_err());
    }

    fn random_case(seed: u64, p: usize, q: usize, n: usize, biased: bool) -> (Kernel, Kernel, RademacherLaw) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let law = if biased {
            gen::random_law(n, 0.1, 0.9, &mut rng).unwrap()
        } else {
            RademacherLaw::symmetric(n).unwrap()
        };
        let f = gen::random_normalized(p, n, 0.7, &mut rng).unwrap();
        let g = gen::random_normalized(q, n, 0.7, &mut rng).unwrap();
        (f, g, law)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn lemma_estimates_hold(seed in any::<u64>(), p in 1usize..4, q in 1usize..4, n in 4usize..9, biased: bool) {
            let (f, g, law) = random_case(seed, p, q, n, biased);
            let r = lemma_tech1_sides(&f, &g, &law).unwrap();
            for c in &r.checks {
                prop_assert!(c.holds(1e-10), "{}", c);
            }
        }

        #[test]
        fn use_and_step2_hold(seed in any::<u64>(), p in 1usize..4, q in 1usize..4, n in 4usize..9, biased: bool) {
            let (f, g, law) = random_case(seed, p.min(q), p.max(q), n, biased);
            prop_assert!(use_bounds(&f, &law).unwrap().all_hold(1e-10));
            let r = step2_covariance_terms(&f, &g, &law).unwrap();
            for c in &r.checks {
                prop_assert!(c.holds(1e-10), "{}", c);
            }
        }
    }
}
