//! Normal-approximation bounds for Rademacher chaos: the univariate
//! fourth-moment-influence Wasserstein bound with explicit constants, the
//! supporting variance estimates, first-chaos formulas, and the multivariate
//! exchangeable-pair diagnostics.
//!
//! Every inequality is returned as a [`Check`] carrying both sides, so callers
//! can report slack instead of a bare boolean.

use std::collections::BTreeMap;
use std::fmt;

use crate::comb::{binomial, factorial};
use crate::error::{input, Result};
use crate::chaos::ChaosDecomposition;
use crate::kernel::{contraction_norm_sq, sym_contract_diagonal, Kernel};
use crate::law::RademacherLaw;
use crate::sampling::Stat;

mod multivariate;
mod tech;
mod univariate;

pub use multivariate::{
    covariance_matrix, multivariate_bound, CovarianceReport, MultivariateInput, MultivariateReport, Route,
};
pub use tech::{lemma_tech1_sides, step2_covariance_terms, use_bounds, Step2Report, TechReport, UseReport};
pub use univariate::{
    dw_bound_univariate, first_chaos_atoms, first_chaos_exact, wasserstein_exact, Fallback, FirstChaosReport,
    HomogeneousBound,
};

/// `γ_p = (2p)!/p! * sum_{r=1}^p r! C(p,r)^2`.
pub fn gamma_p(p: usize) -> Result<f64> {
    if p == 0 {
        return input("γ_p needs p >= 1");
    }
    let s: f64 = (1..=p).map(|r| factorial(r) * binomial(p, r).powi(2)).sum();
    Ok(factorial(2 * p) / factorial(p) * s)
}

/// `√(2/π) + 4/3`.
pub fn c1() -> f64 {
    (2.0 / std::f64::consts::PI).sqrt() + 4.0 / 3.0
}

/// `(√(2/π) + 2√6/3) √γ_p`.
pub fn c2(p: usize) -> Result<f64> {
    Ok(((2.0 / std::f64::consts::PI).sqrt() + 2.0 * 6f64.sqrt() / 3.0) * gamma_p(p)?.sqrt())
}

/// A named constant with its symbolic form.
#[derive(Debug, Clone, PartialEq)]
pub struct Constant {
    pub name: String,
    pub expression: String,
    pub value: f64,
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} = {:.12}", self.name, self.expression, self.value)
    }
}

/// `γ_p`, `C1` and `C2` for order `p`.
pub fn constants(p: usize) -> Result<Vec<Constant>> {
    Ok(vec![
        Constant {
            name: format!("gamma_{p}"),
            expression: format!("({}!/{p}!) * sum_{{r=1}}^{p} r! C({p},r)^2", 2 * p),
            value: gamma_p(p)?,
        },
        Constant {
            name: "C1".into(),
            expression: "sqrt(2/pi) + 4/3".into(),
            value: c1(),
        },
        Constant {
            name: "C2".into(),
            expression: format!("(sqrt(2/pi) + 2 sqrt(6)/3) * sqrt(gamma_{p})"),
            value: c2(p)?,
        },
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    AtMost,
    Equal,
}

/// One evaluated inequality `lhs <= rhs` or identity `lhs = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
}

impl Check {
    pub fn at_most(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            relation: Relation::AtMost,
        }
    }

    pub fn equal(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            relation: Relation::Equal,
        }
    }

    /// `rhs - lhs` for inequalities, `-|lhs - rhs|` for identities. NaN sides
    /// give NaN.
    pub fn slack(&self) -> f64 {
        match self.relation {
            Relation::AtMost => self.rhs - self.lhs,
            Relation::Equal => -(self.lhs - self.rhs).abs(),
        }
    }

    /// `slack >= -tol`.
    pub fn holds(&self, tol: f64) -> bool {
        self.slack() >= -tol
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.relation {
            Relation::AtMost => "<=",
            Relation::Equal => "==",
        };
        write!(
            f,
            "{}: {:.6e} {op} {:.6e} (slack {:.3e})",
            self.name,
            self.lhs,
            self.rhs,
            self.slack()
        )
    }
}

/// Smallest slack over a list of checks, and the check attaining it.
pub fn worst(checks: &[Check]) -> Option<&Check> {
    checks.iter().min_by(|a, b| a.slack().total_cmp(&b.slack()))
}

/// Diagnostic quantities of one bound evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub order: usize,
    pub second_moment: Stat,
    pub fourth_moment: Stat,
    /// `E[F^4] - 3 E[F^2]^2`.
    pub fourth_cumulant: Stat,
    pub influence: f64,
    /// `r ↦ ||f ⊗_r f||^2` for `1 <= r <= p - 1`.
    pub contraction_norms: BTreeMap<usize, f64>,
    /// Measured distance, when available.
    pub lhs: Option<Stat>,
    pub rhs: f64,
    pub constants: Vec<Constant>,
    pub notes: Vec<String>,
}

impl BoundReport {
    /// `lhs <= rhs` as a check; for sampled distances the lhs is lowered by
    /// `sigmas` standard errors.
    pub fn check(&self, sigmas: f64) -> Option<Check> {
        let lhs = self.lhs?;
        let v = lhs.value() - sigmas * lhs.se().unwrap_or(0.0);
        Some(Check::at_most("distance <= bound", v, self.rhs))
    }
}

/// `r ↦ ||f ⊗_r f||^2` for `1 <= r <= p - 1`.
pub fn self_contraction_norms(f: &Kernel) -> Result<BTreeMap<usize, f64>> {
    (1..f.order())
        .map(|r| Ok((r, contraction_norm_sq(f, f, r)?)))
        .collect()
}

/// Checks `p! ||f||^2 = 1` to `1e-10`.
pub(crate) fn require_normalized(f: &Kernel) -> Result<()> {
    let s = factorial(f.order()) * f.norm_sq();
    if (s - 1.0).abs() > 1e-10 {
        return input(format!("kernel must satisfy p! ||f||^2 = 1, got {s}"));
    }
    Ok(())
}

/// The law restricted to the coordinates a kernel lives on.
pub(crate) fn fitted_law(dim: usize, law: &RademacherLaw) -> Result<RademacherLaw> {
    if dim > law.dim() {
        return input(format!(
            "kernel lives on {dim} coordinates but the law has only {}",
            law.dim()
        ));
    }
    law.truncated(dim)
}

/// `||(f ⊗̃ g) 1_{Δ^c}||^2`: the symmetrised tensor product on tuples with a
/// repeated index.
pub fn offdiag_leak_sq(f: &Kernel, g: &Kernel) -> Result<f64> {
    Ok(sym_contract_diagonal(f, g, 0)?.diag_norm_sq())
}

/// `sum_{r=1}^{p∧q} r! C(p,r) C(q,r) min(||f||^2 M(g), ||g||^2 M(f))`, the
/// bound on [`offdiag_leak_sq`].
pub fn leak_bound(f: &Kernel, g: &Kernel) -> f64 {
    let (p, q) = (f.order(), g.order());
    let s: f64 = (1..=p.min(q))
        .map(|r| factorial(r) * binomial(p, r) * binomial(q, r))
        .sum();
    s * (f.norm_sq() * g.max_influence()).min(g.norm_sq() * f.max_influence())
}

/// `sum_{1 <= k < below} k! <a_k, b_k>`: the covariance of the chaos
/// projections of orders `1..below`.
pub(crate) fn projection_inner(a: &ChaosDecomposition, b: &ChaosDecomposition, below: usize) -> Result<f64> {
    let mut s = 0.0;
    for (k, h) in a.kernels().filter(|(k, _)| *k < below) {
        if let Some(g) = b.kernel(k) {
            s += factorial(k) * h.inner(g)?;
        }
    }
    Ok(s)
}

/// `sum_{1 <= k < below} Var J_k`.
pub(crate) fn projection_variance(d: &ChaosDecomposition, below: usize) -> f64 {
    (1..below).map(|k| d.chaos_variance(k)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_p(1).unwrap(), 2.0);
        assert_eq!(gamma_p(2).unwrap(), 72.0);
        assert_eq!(gamma_p(3).unwrap(), 3960.0);
        assert!(gamma_p(0).is_err());
    }

    #[test]
    fn constant_listing_matches_functions() {
        let cs = constants(2).unwrap();
        assert_eq!(cs[0].value, 72.0);
        assert_eq!(cs[1].value, c1());
        assert!((cs[2].value - c2(2).unwrap()).abs() < 1e-15);
        assert!((c1() - 2.1312178941).abs() < 1e-9);
    }

    #[test]
    fn check_slack_conventions() {
        assert!(Check::at_most("a", 1.0, 1.0 - 1e-12).holds(1e-10));
        assert!(!Check::at_most("a", 1.0, 0.9).holds(1e-10));
        assert!(Check::equal("b", 2.0, 2.0 + 1e-11).holds(1e-10));
        assert!(!Check::equal("b", f64::NAN, 0.0).holds(1.0));
    }
}
