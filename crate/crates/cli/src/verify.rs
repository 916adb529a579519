//! Seeded invariant suites over random small kernels and laws.

use std::fmt;
use std::str::FromStr;

use rchaos_core::bounds::{
    dw_bound_univariate, first_chaos_exact, lemma_tech1_sides, multivariate_bound, step2_covariance_terms,
    use_bounds, Check, Fallback, MultivariateInput, Route,
};
use rchaos_core::chaos::{moments, multiply_symmetric, product_top_kernel_check, q_table};
use rchaos_core::comb::factorial;
use rchaos_core::kernel::{contract, sym_contract};
use rchaos_core::ou::{apply_l, exchangeability_check, flip_frequencies, mehler_check};
use rchaos_core::sampling::{derive_seed, stream};
use rchaos_core::{gen, walsh_decompose, Error, HypercubeFunction, Kernel, RademacherLaw, Result};

use crate::table::{num, Table};

/// Tolerance for exact identities and inequalities.
pub const EXACT_TOL: f64 = 1e-10;
/// Standard errors allowed for sampled frequencies.
pub const SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Algebra,
    Chaos,
    Coupling,
    Bounds,
    All,
}

impl Suite {
    fn parts(self) -> Vec<Suite> {
        match self {
            Suite::All => vec![Suite::Algebra, Suite::Chaos, Suite::Coupling, Suite::Bounds],
            s => vec![s],
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algebra" => Ok(Self::Algebra),
            "chaos" => Ok(Self::Chaos),
            "coupling" => Ok(Self::Coupling),
            "bounds" => Ok(Self::Bounds),
            "all" => Ok(Self::All),
            _ => Err(Error::Input(format!(
                "unknown suite {s:?} (algebra, chaos, coupling, bounds, all)"
            ))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Algebra => "algebra",
            Self::Chaos => "chaos",
            Self::Coupling => "coupling",
            Self::Bounds => "bounds",
            Self::All => "all",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub suite: Suite,
    pub trial: usize,
    pub check: Check,
    pub tol: f64,
}

impl VerifyRow {
    pub fn passed(&self) -> bool {
        self.check.holds(self.tol)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifySummary {
    pub rows: Vec<VerifyRow>,
}

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(VerifyRow::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &VerifyRow> {
        self.rows.iter().filter(|r| !r.passed())
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "suite", "trial", "check", "lhs", "rhs", "relation", "slack", "tolerance", "passed",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.suite.to_string(),
                r.trial.to_string(),
                r.check.name.clone(),
                num(r.check.lhs),
                num(r.check.rhs),
                format!("{:?}", r.check.relation),
                num(r.check.slack()),
                num(r.tol),
                r.passed().to_string(),
            ]);
        }
        t
    }
}

/// Orders and dimension of trial `i`; cycles through all order pairs up to 3.
fn shape(i: usize) -> (usize, usize, usize) {
    let p = 1 + i % 3;
    let q = 1 + (i / 3) % 3;
    (p, q, 4 + (i * 7 + i / 9) % 5)
}

struct Trial {
    f: Kernel,
    g: Kernel,
    law: RademacherLaw,
    symmetric: RademacherLaw,
}

fn trial(seed: u64, i: usize) -> Result<Trial> {
    let (p, q, n) = shape(i);
    let mut rng = stream(seed, i as u64);
    Ok(Trial {
        f: gen::random_normalized(p, n, 0.7, &mut rng)?,
        g: gen::random_normalized(q, n, 0.7, &mut rng)?,
        law: gen::random_law(n, 0.1, 0.9, &mut rng)?,
        symmetric: RademacherLaw::symmetric(n)?,
    })
}

/// Function table with pseudo-random values in `[-1, 1)`.
fn random_function(seed: u64, dim: usize) -> Result<HypercubeFunction> {
    HypercubeFunction::from_fn(dim, |a| 2.0 * (derive_seed(seed, a) >> 11) as f64 / (1u64 << 53) as f64 - 1.0)
}

fn zero(name: impl Into<String>, deviation: f64) -> Check {
    Check::at_most(name, deviation, 0.0)
}

fn algebra(t: &Trial) -> Result<Vec<(Check, f64)>> {
    let Trial { f, g, law, symmetric } = t;
    let mut out = Vec::new();
    let prod = q_table(f, symmetric)?.mul(&q_table(g, symmetric)?)?;
    let dev = multiply_symmetric(f, g)?.max_abs_diff(&walsh_decompose(&prod, symmetric)?);
    out.push((zero("product formula vs Walsh (symmetric)", dev), EXACT_TOL));
    let pc = product_top_kernel_check(f, g, law)?;
    out.push((zero("product above top order", pc.above_top), EXACT_TOL));
    out.push((zero("product top kernel", pc.top_deviation), EXACT_TOL));
    for r in 0..=f.order().min(g.order()) {
        let dev = contract(f, g, r)?.symmetrize().max_abs_diff(&sym_contract(f, g, r)?.to_raw());
        out.push((zero(format!("symmetrised contraction (r={r})"), dev), EXACT_TOL));
    }
    let norm = factorial(f.order()) * f.norm_sq();
    out.push((Check::equal("normalisation", norm, 1.0), EXACT_TOL));
    Ok(out)
}

fn chaos(seed: u64, i: usize, t: &Trial) -> Result<Vec<(Check, f64)>> {
    let Trial { f, g, law, .. } = t;
    let mut out = Vec::new();
    let h = random_function(derive_seed(seed, i as u64), law.dim())?;
    let back = walsh_decompose(&h, law)?.to_function(law)?;
    out.push((zero("Walsh round trip", back.max_abs_diff(&h)), EXACT_TOL));
    let d = walsh_decompose(&q_table(f, law)?, law)?;
    let kernel_dev = d.kernel(f.order()).map_or(f64::INFINITY, |k| k.max_abs_diff(f));
    out.push((zero("kernel recovered from chaos", kernel_dev), EXACT_TOL));
    out.push((zero("no other chaos components", d.projection(f.order()).max_abs_diff(&d)), EXACT_TOL));
    let m = moments(f, law, &[1, 2])?;
    out.push((Check::equal("E[Q] = 0", m[&1], 0.0), EXACT_TOL));
    out.push((Check::equal("E[Q^2] = p! ||f||^2", m[&2], 1.0), EXACT_TOL));
    let cross = q_table(f, law)?.mul(&q_table(g, law)?)?.expect(law)?;
    let expected = if f.order() == g.order() {
        factorial(f.order()) * f.inner(g)?
    } else {
        0.0
    };
    out.push((Check::equal("chaos isometry", cross, expected), EXACT_TOL));
    Ok(out)
}

fn coupling(seed: u64, i: usize, t: &Trial, samples: usize) -> Result<Vec<(Check, f64)>> {
    let Trial { f, law, .. } = t;
    let mut out = Vec::new();
    let h = random_function(derive_seed(seed, !(i as u64)), law.dim())?;
    let gen_dev = apply_l(&walsh_decompose(&h, law)?)
        .to_function(law)?
        .max_abs_diff(&h.generator(law)?);
    out.push((zero("generator spectral vs pointwise", gen_dev), EXACT_TOL));
    for tt in [0.1, 0.5, 1.0] {
        out.push((zero(format!("mehler_check (t={tt})"), mehler_check(&h, tt, law)?), EXACT_TOL));
        let ex = exchangeability_check(f, tt, law)?;
        out.push((zero(format!("exchangeability asymmetry (t={tt})"), ex.max_asymmetry), EXACT_TOL));
        out.push((Check::equal(format!("pair mass (t={tt})"), ex.total_mass, 1.0), EXACT_TOL));
    }
    let tt = [0.1, 0.5, 1.0][i % 3];
    let stats = flip_frequencies(law, tt, samples, derive_seed(seed, i as u64 + (1 << 40)))?;
    let worst = stats
        .iter()
        .zip(law.probs())
        .flat_map(|(s, &pk)| {
            [
                s.down.z_score(s.expected).abs(),
                s.up.z_score(s.expected).abs(),
                s.marginal.z_score(pk).abs(),
            ]
        })
        .fold(0.0, f64::max);
    out.push((Check::at_most(format!("flip frequency |z| (t={tt})"), worst, SIGMAS), 0.0));
    Ok(out)
}

fn bounds(t: &Trial) -> Result<Vec<(Check, f64)>> {
    let Trial { f, g, law, symmetric } = t;
    let mut out = Vec::new();
    for l in [law, symmetric] {
        out.extend(lemma_tech1_sides(f, g, l)?.checks.into_iter().map(|c| (c, EXACT_TOL)));
        out.extend(use_bounds(f, l)?.checks.into_iter().map(|c| (c, EXACT_TOL)));
        let (a, b) = if f.order() <= g.order() { (f, g) } else { (g, f) };
        out.extend(step2_covariance_terms(a, b, l)?.checks.into_iter().map(|c| (c, EXACT_TOL)));
    }
    if f.order() >= 2 {
        let r = dw_bound_univariate(f, law, &Fallback::default())?;
        if let Some(mut c) = r.check(0.0) {
            c.name = "univariate distance <= bound".into();
            out.push((c, EXACT_TOL));
        }
    }
    let h = if f.order() == 1 { f } else { g };
    if h.order() == 1 {
        let fc = first_chaos_exact(h, law)?;
        out.push((Check::equal("first-chaos fourth moment", fc.fourth_formula, fc.fourth_law), EXACT_TOL));
        if let Some(e) = fc.fourth_enumerated {
            out.push((Check::equal("first-chaos fourth moment (enumerated)", fc.fourth_formula, e), EXACT_TOL));
        }
        if let Some(c) = fc.report.check(0.0) {
            out.push((c, EXACT_TOL));
        }
        out.push((Check::at_most("first-chaos Kolmogorov", fc.kolmogorov, fc.kolmogorov_bound), EXACT_TOL));
        if let Some(lhs) = fc.report.lhs {
            out.push((
                Check::at_most("first-chaos influence bound", lhs.value(), fc.dw_influence_bound),
                EXACT_TOL,
            ));
        }
        out.push((
            Check::at_most("first-chaos Kolmogorov influence bound", fc.kolmogorov, fc.kolmogorov_influence_bound),
            EXACT_TOL,
        ));
    }
    let (a, b) = if f.order() <= g.order() { (f, g) } else { (g, f) };
    let input = MultivariateInput::new(vec![a.clone(), b.clone()], symmetric, None, 1.0, 1.0)?;
    let e = multivariate_bound(&input, Some(Route::Enumeration))?;
    let s = multivariate_bound(&input, Some(Route::SymmetricAlgebra))?;
    let scale = e.rhs_upper.abs().max(1.0);
    out.push((
        Check::equal("multivariate routes agree", e.rhs_upper / scale, s.rhs_upper / scale),
        EXACT_TOL,
    ));
    if let Some(rhs) = e.rhs {
        out.push((Check::at_most("exact E||S|| <= Jensen bound", rhs, e.rhs_upper), EXACT_TOL));
    }
    Ok(out)
}

/// Runs `suite` on `trials` seeded random cases; coupling frequencies use
/// `samples` coupled pairs.
pub fn run_verify(suite: Suite, seed: u64, trials: usize, samples: usize) -> Result<VerifySummary> {
    if trials == 0 || samples < 2 {
        return Err(Error::Input("need at least one trial and two samples".into()));
    }
    let mut rows = Vec::new();
    for part in suite.parts() {
        for i in 0..trials {
            let t = trial(seed, i)?;
            let checks = match part {
                Suite::Algebra => algebra(&t)?,
                Suite::Chaos => chaos(seed, i, &t)?,
                Suite::Coupling => coupling(seed, i, &t, samples)?,
                Suite::Bounds => bounds(&t)?,
                Suite::All => unreachable!("expanded by parts"),
            };
            rows.extend(checks.into_iter().map(|(check, tol)| VerifyRow {
                suite: part,
                trial: i,
                check,
                tol,
            }));
        }
    }
    Ok(VerifySummary { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(matches!("geometry".parse::<Suite>(), Err(Error::Input(_))));
        assert_eq!("coupling".parse::<Suite>().unwrap(), Suite::Coupling);
    }

    #[test]
    fn shapes_cover_all_order_pairs() {
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..9 {
            let (p, q, n) = shape(i);
            assert!(n >= 4 && n <= 8);
            seen.insert((p, q));
        }
        assert_eq!(seen.len(), 9);
    }

    #[test]
    fn every_suite_passes_on_a_few_trials() {
        let s = run_verify(Suite::All, 3, 9, 4000).unwrap();
        for r in s.failures() {
            panic!("{} trial {}: {}", r.suite, r.trial, r.check);
        }
        assert!(s.rows.iter().any(|r| r.check.name.starts_with("mehler_check")));
        assert!(s.rows.iter().any(|r| r.check.name == "univariate distance <= bound"));
    }
}
