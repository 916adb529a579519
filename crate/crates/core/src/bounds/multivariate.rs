use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};

use super::offdiag_leak_sq;
use crate::chaos::{q_table, walsh_decompose};
use crate::comb::{binomial, factorial};
use crate::error::{input, Error, Result};
use crate::hypercube::{check_cap, exact_cap, HypercubeFunction};
use crate::kernel::{contract_blocks, contraction_norm_sq, sym_contract, sym_contract_diagonal, tensor_inner, Kernel};
use crate::law::RademacherLaw;
use crate::ou::rho;

/// A vector of homogeneous chaoses `(Q_{q_1}(f_1), .., Q_{q_d}(f_d))` with a
/// target covariance and the test-function constants `M2`, `M3`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateInput {
    kernels: Vec<Kernel>,
    law: RademacherLaw,
    target_cov: Option<DMatrix<f64>>,
    m2: f64,
    m3: f64,
}

impl MultivariateInput {
    /// Kernels are padded to a common coordinate range and the law is cut to
    /// it. Orders must be nondecreasing; the target, if given, must be a
    /// symmetric `d x d` matrix with eigenvalues `>= -1e-12`.
    pub fn new(
        kernels: Vec<Kernel>,
        law: &RademacherLaw,
        target_cov: Option<DMatrix<f64>>,
        m2: f64,
        m3: f64,
    ) -> Result<Self> {
        if kernels.is_empty() {
            return input("at least one component is needed");
        }
        if kernels.windows(2).any(|w| w[0].order() > w[1].order()) {
            return input("component orders must be nondecreasing");
        }
        if !(m2 >= 0.0 && m3 >= 0.0 && m2.is_finite() && m3.is_finite()) {
            return input("M2 and M3 must be finite and nonnegative");
        }
        let n = kernels.iter().map(Kernel::dim).max().unwrap_or(0);
        if n > law.dim() {
            return input(format!("kernels use {n} coordinates, the law has {}", law.dim()));
        }
        let kernels = kernels.iter().map(|f| f.with_dim(n)).collect::<Result<Vec<_>>>()?;
        if let Some(s) = &target_cov {
            let d = kernels.len();
            if s.nrows() != d || s.ncols() != d {
                return input(format!("target covariance must be {d} x {d}"));
            }
            if (s - s.transpose()).amax() > 1e-12 {
                return input("target covariance must be symmetric");
            }
            let min_eig = SymmetricEigen::new(s.clone()).eigenvalues.min();
            if min_eig < -1e-12 {
                return input(format!("target covariance has eigenvalue {min_eig}"));
            }
        }
        Ok(Self {
            kernels,
            law: law.truncated(n)?,
            target_cov,
            m2,
            m3,
        })
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn law(&self) -> &RademacherLaw {
        &self.law
    }

    pub fn components(&self) -> usize {
        self.kernels.len()
    }

    pub fn orders(&self) -> Vec<usize> {
        self.kernels.iter().map(Kernel::order).collect()
    }

    pub fn target_cov(&self) -> Option<&DMatrix<f64>> {
        self.target_cov.as_ref()
    }
}

/// `E[F_i F_j]` by the orthogonality formula and, within the exact cap, by
/// enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport {
    pub formula: DMatrix<f64>,
    pub enumerated: Option<DMatrix<f64>>,
}

impl CovarianceReport {
    pub fn max_deviation(&self) -> Option<f64> {
        self.enumerated.as_ref().map(|e| (e - &self.formula).amax())
    }
}

fn covariance_formula(kernels: &[Kernel]) -> Result<DMatrix<f64>> {
    let d = kernels.len();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let (f, g) = (&kernels[i], &kernels[j]);
            let v = if f.order() == g.order() {
                factorial(f.order()) * f.inner(g)?
            } else {
                0.0
            };
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

pub fn covariance_matrix(input: &MultivariateInput) -> Result<CovarianceReport> {
    let formula = covariance_formula(&input.kernels)?;
    let enumerated = if input.law.dim() <= exact_cap() {
        let tables = tables(input)?;
        let d = tables.len();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = tables[i].mul(&tables[j])?.expect(&input.law)?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Some(m)
    } else {
        None
    };
    Ok(CovarianceReport { formula, enumerated })
}

fn tables(input: &MultivariateInput) -> Result<Vec<HypercubeFunction>> {
    input.kernels.iter().map(|f| q_table(f, &input.law)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Value tables over the whole hypercube.
    Enumeration,
    /// Product formula for the symmetric law; scales with kernel sparsity
    /// rather than `2^N`, but yields only the Jensen upper bound on `E||S||`.
    SymmetricAlgebra,
}

/// Right side of the exchangeable-pair bound with
/// `Λ = diag(q_i)` and `S_ij = 2Γ(F_i, F_j) - 2 q_j Σ_ij`, plus the variance
/// and covariance quantities that drive it.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateReport {
    pub route: Route,
    pub orders: Vec<usize>,
    /// `E[F_i F_j]`.
    pub covariance: DMatrix<f64>,
    /// `Σ` used in `S`: the input target, else `covariance`.
    pub target: DMatrix<f64>,
    pub fourth_moments: Vec<f64>,
    /// `E F_i^4 - 3 E[F_i^2]^2`.
    pub fourth_cumulants: Vec<f64>,
    pub influences: Vec<f64>,
    pub gamma_mean: DMatrix<f64>,
    pub gamma_var: DMatrix<f64>,
    /// `Cov(F_i^2, F_j^2) - 2 E[F_i F_j]^2`.
    pub square_cov: DMatrix<f64>,
    pub rho: Vec<f64>,
    /// `E S_ii`.
    pub mean_s_diag: Vec<f64>,
    /// Exact `E ||S||_HS`, enumeration route only.
    pub s_hs_mean: Option<f64>,
    /// `√(E ||S||_HS^2)`.
    pub s_hs_upper: f64,
    /// `||Λ^{-1}||_op = 1 / min q_i`.
    pub lambda_inv_norm: f64,
    pub m2: f64,
    pub m3: f64,
    /// The bound with exact `E ||S||_HS`.
    pub rhs: Option<f64>,
    /// The bound with `√(E ||S||_HS^2)` in place of `E ||S||_HS`.
    pub rhs_upper: f64,
}

impl MultivariateReport {
    /// `rhs` when available, else `rhs_upper`.
    pub fn best_rhs(&self) -> f64 {
        self.rhs.unwrap_or(self.rhs_upper)
    }

    fn evaluate(&self, s_term: f64) -> f64 {
        let d = self.orders.len() as f64;
        let trace: f64 = (0..self.orders.len())
            .map(|i| 2.0 * self.orders[i] as f64 * self.target[(i, i)] + self.mean_s_diag[i])
            .sum();
        let rho_sum: f64 = self.rho.iter().sum();
        self.lambda_inv_norm * d.sqrt() * self.m2 / 4.0 * s_term
            + d.sqrt() * self.m3 * self.lambda_inv_norm / 18.0 * trace.max(0.0).sqrt() * rho_sum.max(0.0).sqrt()
    }
}

/// Evaluates the bound by enumeration within the exact cap, and by the
/// symmetric product formula beyond it. `route` forces one of the two.
pub fn multivariate_bound(input: &MultivariateInput, route: Option<Route>) -> Result<MultivariateReport> {
    let n = input.law.dim();
    let route = match route {
        Some(r) => r,
        None if n <= exact_cap() => Route::Enumeration,
        None if input.law.is_symmetric() => Route::SymmetricAlgebra,
        None => {
            return Err(Error::Resource(format!(
                "{n} coordinates exceed the exact cap and the law is not symmetric"
            )))
        }
    };
    let d = input.components();
    let orders = input.orders();
    let covariance = covariance_formula(&input.kernels)?;
    let target = input.target_cov.clone().unwrap_or_else(|| covariance.clone());
    let mut report = MultivariateReport {
        route,
        orders: orders.clone(),
        covariance,
        target,
        fourth_moments: vec![0.0; d],
        fourth_cumulants: vec![0.0; d],
        influences: input.kernels.iter().map(Kernel::max_influence).collect(),
        gamma_mean: DMatrix::zeros(d, d),
        gamma_var: DMatrix::zeros(d, d),
        square_cov: DMatrix::zeros(d, d),
        rho: vec![0.0; d],
        mean_s_diag: vec![0.0; d],
        s_hs_mean: None,
        s_hs_upper: 0.0,
        lambda_inv_norm: 1.0 / orders[0] as f64,
        m2: input.m2,
        m3: input.m3,
        rhs: None,
        rhs_upper: 0.0,
    };
    match route {
        Route::Enumeration => enumerate(input, &mut report)?,
        Route::SymmetricAlgebra => {
            if !input.law.is_symmetric() {
                return input_err("the product-formula route needs the symmetric law");
            }
            algebra(input, &mut report)?
        }
    }
    let mut s_sq = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mean = 2.0 * report.gamma_mean[(i, j)] - 2.0 * orders[j] as f64 * report.target[(i, j)];
            s_sq += 4.0 * report.gamma_var[(i, j)] + mean * mean;
        }
        report.mean_s_diag[i] = 2.0 * report.gamma_mean[(i, i)] - 2.0 * orders[i] as f64 * report.target[(i, i)];
        report.fourth_cumulants[i] = report.fourth_moments[i] - 3.0 * report.covariance[(i, i)].powi(2);
    }
    report.s_hs_upper = s_sq.sqrt();
    report.rhs_upper = report.evaluate(report.s_hs_upper);
    report.rhs = report.s_hs_mean.map(|s| report.evaluate(s));
    Ok(report)
}

fn input_err<T>(msg: &str) -> Result<T> {
    input(msg)
}

fn enumerate(input: &MultivariateInput, report: &mut MultivariateReport) -> Result<()> {
    let law = &input.law;
    check_cap(law.dim())?;
    let d = input.components();
    let t = tables(input)?;
    let orders = &report.orders;
    let mut gammas: Vec<Vec<Option<HypercubeFunction>>> = vec![vec![None; d]; d];
    for i in 0..d {
        for j in i..d {
            let prod = walsh_decompose(&t[i].mul(&t[j])?, law)?;
            let s = orders[i] + orders[j];
            let gamma = prod.map_orders(|k| s.saturating_sub(k) as f64 / 2.0);
            for (a, b) in [(i, j), (j, i)] {
                report.gamma_mean[(a, b)] = gamma.constant();
                report.gamma_var[(a, b)] = gamma.variance();
            }
            let table = gamma.to_function(law)?;
            gammas[j][i] = Some(table.clone());
            gammas[i][j] = Some(table);

            let sq_i = t[i].mul(&t[i])?;
            let sq_j = t[j].mul(&t[j])?;
            let cov = sq_i.mul(&sq_j)?.expect(law)? - sq_i.expect(law)? * sq_j.expect(law)?;
            let efg = t[i].mul(&t[j])?.expect(law)?;
            report.square_cov[(i, j)] = cov - 2.0 * efg * efg;
            report.square_cov[(j, i)] = report.square_cov[(i, j)];
        }
        report.fourth_moments[i] = t[i].moment(law, 4)?;
        report.rho[i] = rho(&input.kernels[i], law)?;
    }
    // S_ij = 2Γ_ij - 2 q_j Σ_ij at every atom, then E ||S||_HS.
    let mut norm_sq = HypercubeFunction::constant(law.dim(), 0.0)?;
    for i in 0..d {
        for j in 0..d {
            let shift = 2.0 * orders[j] as f64 * report.target[(i, j)];
            let g = gammas[i][j].as_ref().expect("filled above");
            let s = g.map(|v| 2.0 * v - shift);
            norm_sq = norm_sq.add(&s.mul(&s)?)?;
        }
    }
    report.s_hs_mean = Some(norm_sq.map(f64::sqrt).expect(law)?);
    Ok(())
}

/// Chaos expansion of `Q_p(f) Q_q(g)` under the symmetric law, keeping the
/// top component only through its variance.
struct ProductSpectrum {
    constant: f64,
    /// Components of order `< p + q`, coefficients included.
    lower: BTreeMap<usize, Kernel>,
    /// `(p+q)! ||(f ⊗̃ g) 1_Δ||^2`.
    top_var: f64,
}

impl ProductSpectrum {
    fn new(f: &Kernel, g: &Kernel) -> Result<Self> {
        let (p, q) = (f.order(), g.order());
        let mut constant = 0.0;
        let mut lower = BTreeMap::new();
        let mut expansion = f.norm_sq() * g.norm_sq();
        for r in 1..=p.min(q) {
            let c = factorial(r) * binomial(p, r) * binomial(q, r);
            let t = sym_contract(f, g, r)?;
            match t.offdiag_kernel() {
                Some(h) => {
                    let h = h.scaled(c);
                    if !h.is_zero() {
                        lower.insert(p + q - 2 * r, h);
                    }
                }
                None => constant += c * t.as_scalar().expect("order-zero table"),
            }
            expansion += binomial(p, r) * binomial(q, r) * contraction_norm_sq(f, g, r)?;
        }
        let top_var = factorial(p) * factorial(q) * expansion - factorial(p + q) * offdiag_leak_sq(f, g)?;
        Ok(Self {
            constant,
            lower,
            top_var,
        })
    }

    /// `sum_k w(k) k! ||h_k||^2` over the lower components.
    fn weighted_lower(&self, w: impl Fn(usize) -> f64) -> f64 {
        self.lower
            .iter()
            .map(|(&k, h)| w(k) * factorial(k) * h.norm_sq())
            .sum()
    }
}

/// `(2q)! <(f ⊗̃ f) 1_Δ, (g ⊗̃ g) 1_Δ>` for equal orders.
fn top_square_inner(f: &Kernel, g: &Kernel) -> Result<f64> {
    let q = f.order();
    let mut s = 2.0 * factorial(q).powi(2) * f.inner(g)?.powi(2);
    for r in 1..q {
        let w = factorial(q).powi(2) * binomial(q, r).powi(2);
        s += w * contract_blocks(f, g, r)?.inner(&contract_blocks(g, f, r)?)?;
    }
    let diag = sym_contract_diagonal(f, f, 0)?.diag_inner(&sym_contract_diagonal(g, g, 0)?);
    Ok(s - factorial(2 * q) * diag)
}

/// `Cov(F_i^2, F_j^2)` from the two square spectra.
fn square_covariance(f: &Kernel, g: &Kernel, sf: &ProductSpectrum, sg: &ProductSpectrum) -> Result<f64> {
    let (p, q) = (f.order(), g.order());
    let mut s = 0.0;
    for (&k, h) in &sf.lower {
        if let Some(h2) = sg.lower.get(&k) {
            s += factorial(k) * h.inner(h2)?;
        }
    }
    if let Some(h) = sg.lower.get(&(2 * p)) {
        s += factorial(2 * p) * tensor_inner(f, f, h)?;
    }
    if let Some(h) = sf.lower.get(&(2 * q)) {
        s += factorial(2 * q) * tensor_inner(g, g, h)?;
    }
    if p == q {
        s += top_square_inner(f, g)?;
    }
    Ok(s)
}

fn algebra(input: &MultivariateInput, report: &mut MultivariateReport) -> Result<()> {
    let d = input.components();
    let ks = &input.kernels;
    let orders = &report.orders;
    let squares = ks
        .iter()
        .map(|f| ProductSpectrum::new(f, f))
        .collect::<Result<Vec<_>>>()?;
    for i in 0..d {
        let sq = &squares[i];
        let qi = orders[i];
        report.fourth_moments[i] = sq.constant.powi(2) + sq.weighted_lower(|_| 1.0) + sq.top_var;
        let cross = qi as f64 * sq.constant.powi(2) + sq.weighted_lower(|k| (2 * qi - k) as f64 / 2.0);
        report.rho[i] = -4.0 * qi as f64 * report.fourth_moments[i] + 12.0 * cross;
        for j in i..d {
            let spec = if i == j {
                None
            } else {
                Some(ProductSpectrum::new(&ks[i], &ks[j])?)
            };
            let spec = spec.as_ref().unwrap_or(sq);
            let s = orders[i] + orders[j];
            let mean = s as f64 / 2.0 * spec.constant;
            let var = spec.weighted_lower(|k| ((s - k) as f64 / 2.0).powi(2));
            let efg = report.covariance[(i, j)];
            let cov = square_covariance(&ks[i], &ks[j], sq, &squares[j])?;
            for (a, b) in [(i, j), (j, i)] {
                report.gamma_mean[(a, b)] = mean;
                report.gamma_var[(a, b)] = var;
                report.square_cov[(a, b)] = cov - 2.0 * efg * efg;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn single_sign_plug_in() {
        let law = RademacherLaw::symmetric(1).unwrap();
        let input = MultivariateInput::new(vec![Kernel::indicator(0, 1).unwrap()], &law, None, 1.0, 1.0).unwrap();
        let r = multivariate_bound(&input, None).unwrap();
        assert_eq!(r.route, Route::Enumeration);
        assert!(r.s_hs_mean.unwrap().abs() < 1e-14);
        assert!((r.rho[0] - 8.0).abs() < 1e-12);
        let expected = 2f64.sqrt() * 8f64.sqrt() / 18.0;
        assert!((r.rhs.unwrap() - expected).abs() < 1e-12);
        assert!((r.rhs_upper - expected).abs() < 1e-12);
    }

    #[test]
    fn independent_signs_reduce_componentwise() {
        let law = RademacherLaw::symmetric(3).unwrap();
        let ks = (0..3).map(|k| Kernel::indicator(k, 3).unwrap()).collect();
        let input = MultivariateInput::new(ks, &law, Some(DMatrix::identity(3, 3)), 1.0, 1.0).unwrap();
        let r = multivariate_bound(&input, None).unwrap();
        assert!(r.s_hs_mean.unwrap().abs() < 1e-14);
        assert!(r.rho.iter().all(|x| (x - 8.0).abs() < 1e-12));
        let a = multivariate_bound(&input, Some(Route::SymmetricAlgebra)).unwrap();
        assert!(close(a.rhs_upper, r.rhs.unwrap(), 1e-12));
    }

    #[test]
    fn vanishing_inputs_give_zero_bound() {
        let law = RademacherLaw::symmetric(2).unwrap();
        let f = Kernel::zero(1, 2).unwrap();
        let input = MultivariateInput::new(vec![f], &law, Some(DMatrix::zeros(1, 1)), 1.0, 1.0).unwrap();
        let r = multivariate_bound(&input, None).unwrap();
        assert_eq!(r.rhs.unwrap(), 0.0);
        assert_eq!(r.rhs_upper, 0.0);
    }

    #[test]
    fn cross_order_covariance_vanishes() {
        let law = RademacherLaw::symmetric(6).unwrap();
        let input = MultivariateInput::new(
            vec![gen::uniform_first_order(6).unwrap(), gen::ring(6).unwrap()],
            &law,
            None,
            1.0,
            1.0,
        )
        .unwrap();
        let c = covariance_matrix(&input).unwrap();
        assert_eq!(c.formula[(0, 1)], 0.0);
        assert!(c.max_deviation().unwrap() < 1e-12);
        assert!((c.formula[(1, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn input_validation() {
        let law = RademacherLaw::symmetric(4).unwrap();
        let a = gen::ring(4).unwrap();
        let b = Kernel::indicator(0, 4).unwrap();
        assert!(MultivariateInput::new(vec![a.clone(), b.clone()], &law, None, 1.0, 1.0).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(MultivariateInput::new(vec![b.clone(), a.clone()], &law, Some(bad), 1.0, 1.0).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(MultivariateInput::new(vec![b.clone(), a.clone()], &law, Some(asym), 1.0, 1.0).is_err());
        assert!(MultivariateInput::new(vec![b, a], &law, None, -1.0, 1.0).is_err());
    }

    #[test]
    fn biased_law_beyond_cap_is_a_resource_error() {
        let n = exact_cap() + 1;
        let law = RademacherLaw::homogeneous(n, 0.3).unwrap();
        let input = MultivariateInput::new(vec![gen::uniform_first_order(n).unwrap()], &law, None, 1.0, 1.0).unwrap();
        assert!(matches!(multivariate_bound(&input, None), Err(Error::Resource(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn routes_agree_on_symmetric_law(seed in any::<u64>(), p in 1usize..4, q in 1usize..4, n in 4usize..9) {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let (p, q) = (p.min(q), p.max(q));
            let law = RademacherLaw::symmetric(n).unwrap();
            let ks = vec![
                gen::random_normalized(p, n, 0.7, &mut rng).unwrap(),
                gen::random_normalized(q, n, 0.7, &mut rng).unwrap(),
            ];
            let input = MultivariateInput::new(ks, &law, Some(DMatrix::identity(2, 2)), 1.0, 1.0).unwrap();
            let e = multivariate_bound(&input, Some(Route::Enumeration)).unwrap();
            let a = multivariate_bound(&input, Some(Route::SymmetricAlgebra)).unwrap();
            for i in 0..2 {
                prop_assert!(close(e.fourth_moments[i], a.fourth_moments[i], 1e-10));
                prop_assert!(close(e.rho[i], a.rho[i], 1e-10));
                for j in 0..2 {
                    prop_assert!(close(e.gamma_var[(i, j)], a.gamma_var[(i, j)], 1e-10));
                    prop_assert!(close(e.gamma_mean[(i, j)], a.gamma_mean[(i, j)], 1e-10));
                    prop_assert!(close(e.square_cov[(i, j)], a.square_cov[(i, j)], 1e-10));
                }
            }
            prop_assert!(close(e.rhs_upper, a.rhs_upper, 1e-10));
            prop_assert!(e.s_hs_mean.unwrap() <= e.s_hs_upper + 1e-12);
        }
    }
}
