//! Monte Carlo experiments: the non-universal counterexample, the de Jong
//! sweep over input laws, and the multivariate convergence sweep.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rchaos_core::bounds::{first_chaos_exact, multivariate_bound, MultivariateInput, MultivariateReport, Route};
use rchaos_core::chaos::{eval_q_values, q_table};
use rchaos_core::gaussian::{empirical_w1_bootstrap, gaussian_expectation};
use rchaos_core::hypercube::{exact_cap, HypercubeFunction};
use rchaos_core::sampling::{
    derive_seed, moment_estimate, sample_q, stream, DiscreteLaw, Estimate, InputLaw, SamplerSpec, Stat,
};
use rchaos_core::{gen, Error, Kernel, RademacherLaw, Result};

use crate::config::ExperimentConfig;
use crate::table::{exact, num, opt, sampled, stat, Table};

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

/// Second and fourth sample moments and the empirical `W1` to `N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSummary {
    pub m2: Estimate,
    pub m4: Estimate,
    pub w1: Estimate,
}

impl SampleSummary {
    pub fn of(xs: &[f64], bootstrap: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            m2: moment_estimate(xs, 2),
            m4: moment_estimate(xs, 4),
            w1: empirical_w1_bootstrap(xs, bootstrap, seed)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleParams {
    pub q: usize,
    pub ns: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub bootstrap: usize,
}

impl CounterexampleParams {
    pub fn from_config(c: &ExperimentConfig) -> Result<Self> {
        let p = Self {
            q: c.parsed("q", 2)?,
            ns: c.list("n", &[10, 100, 1000, 5000])?,
            samples: c.parsed("samples", 1_000_000)?,
            seed: c.parsed("seed", 42)?,
            bootstrap: c.parsed("bootstrap", 200)?,
        };
        if p.q < 2 {
            return bad("counterexample needs q >= 2");
        }
        if p.ns.iter().any(|&n| n < p.q) {
            return bad(format!("every N must be at least q = {}", p.q));
        }
        if p.samples < 2 || p.bootstrap == 0 {
            return bad("need at least two samples and one bootstrap replicate");
        }
        Ok(p)
    }

    pub fn to_config(&self) -> ExperimentConfig {
        let mut c = ExperimentConfig::new();
        c.set("experiment", "counterexample");
        c.set("q", self.q);
        c.set_list("n", &self.ns);
        c.set("samples", self.samples);
        c.set("seed", self.seed);
        c.set("bootstrap", self.bootstrap);
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleRow {
    pub n: usize,
    pub influence: f64,
    pub rademacher: SampleSummary,
    pub gaussian: SampleSummary,
}

/// Sweeps `N` for the kernel `f_N` of order `q`: exact influence, and sampled
/// moments and distance for symmetric Rademacher and Gaussian inputs.
pub fn run_counterexample(p: &CounterexampleParams) -> Result<Vec<CounterexampleRow>> {
    p.ns.iter()
        .enumerate()
        .map(|(i, &n)| {
            let f = gen::counterexample(p.q, n)?;
            let mut summaries = Vec::with_capacity(2);
            for (j, inputs) in [InputLaw::Rademacher(RademacherLaw::symmetric(n)?), InputLaw::Gaussian]
                .into_iter()
                .enumerate()
            {
                let s = derive_seed(p.seed, (2 * i + j) as u64);
                let xs = sample_q(&f, &SamplerSpec::new(inputs, s), p.samples)?;
                summaries.push(SampleSummary::of(&xs, p.bootstrap, derive_seed(s, u64::MAX))?);
            }
            Ok(CounterexampleRow {
                n,
                influence: f.max_influence(),
                rademacher: summaries[0],
                gaussian: summaries[1],
            })
        })
        .collect()
}

fn summary_columns(prefix: &str) -> Vec<String> {
    ["m2", "m4", "w1"]
        .iter()
        .flat_map(|s| [format!("{prefix}_{s}"), format!("{prefix}_{s}_mode")])
        .collect()
}

fn summary_cells(s: &SampleSummary) -> Vec<String> {
    [s.m2, s.m4, s.w1].into_iter().flat_map(sampled).collect()
}

pub fn counterexample_table(rows: &[CounterexampleRow]) -> Table {
    let mut header = vec!["n".to_string(), "influence".into(), "influence_mode".into()];
    header.extend(summary_columns("rademacher"));
    header.extend(summary_columns("gaussian"));
    let mut t = Table::new(header);
    for r in rows {
        let mut row = vec![r.n.to_string()];
        row.extend(exact(r.influence));
        row.extend(summary_cells(&r.rademacher));
        row.extend(summary_cells(&r.gaussian));
        t.push(row);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// Every increasing key carries the same weight.
    Full,
    /// Each key kept with probability `density`, Gaussian weights.
    Sparse,
    /// Order-two cycle graph.
    Ring,
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "sparse" => Ok(Self::Sparse),
            "ring" => Ok(Self::Ring),
            _ => bad(format!("unknown generator {s:?} (full, sparse, ring)")),
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Sparse => "sparse",
            Self::Ring => "ring",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Rademacher,
    Gaussian,
    /// Equally spaced grid approximating the uniform law on `[-√3, √3]`.
    Uniform,
}

impl FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rademacher" => Ok(Self::Rademacher),
            "gaussian" => Ok(Self::Gaussian),
            "uniform" => Ok(Self::Uniform),
            _ => bad(format!("unknown input law {s:?} (rademacher, gaussian, uniform)")),
        }
    }
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rademacher => "rademacher",
            Self::Gaussian => "gaussian",
            Self::Uniform => "uniform",
        })
    }
}

impl InputKind {
    pub fn law(&self, dim: usize, grid: usize) -> Result<InputLaw> {
        Ok(match self {
            Self::Rademacher => InputLaw::Rademacher(RademacherLaw::symmetric(dim)?),
            Self::Gaussian => InputLaw::Gaussian,
            Self::Uniform => InputLaw::Custom(DiscreteLaw::uniform_grid(grid)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DejongParams {
    pub generator: Generator,
    pub order: usize,
    pub ns: Vec<usize>,
    pub inputs: Vec<InputKind>,
    pub samples: usize,
    pub seed: u64,
    pub density: f64,
    pub bootstrap: usize,
    pub grid: usize,
}

impl DejongParams {
    pub fn from_config(c: &ExperimentConfig) -> Result<Self> {
        let p = Self {
            generator: c.parsed("generator", Generator::Full)?,
            order: c.parsed("order", 2)?,
            ns: c.list("n", &[8, 16, 32, 64])?,
            inputs: c.list(
                "inputs",
                &[InputKind::Rademacher, InputKind::Gaussian, InputKind::Uniform],
            )?,
            samples: c.parsed("samples", 200_000)?,
            seed: c.parsed("seed", 42)?,
            density: c.parsed("density", 0.3)?,
            bootstrap: c.parsed("bootstrap", 200)?,
            grid: c.parsed("grid", 1000)?,
        };
        if p.order == 0 || p.ns.iter().any(|&n| n < p.order) {
            return bad("need order >= 1 and every N >= order");
        }
        if p.generator == Generator::Ring && (p.order != 2 || p.ns.iter().any(|&n| n < 3)) {
            return bad("the ring generator has order 2 and needs N >= 3");
        }
        if !(p.density > 0.0 && p.density <= 1.0) {
            return bad("density must lie in (0, 1]");
        }
        if p.samples < 2 || p.bootstrap == 0 {
            return bad("need at least two samples and one bootstrap replicate");
        }
        Ok(p)
    }

    pub fn to_config(&self) -> ExperimentConfig {
        let mut c = ExperimentConfig::new();
        c.set("experiment", "dejong");
        c.set("generator", self.generator);
        c.set("order", self.order);
        c.set_list("n", &self.ns);
        c.set_list("inputs", &self.inputs);
        c.set("samples", self.samples);
        c.set("seed", self.seed);
        c.set("density", self.density);
        c.set("bootstrap", self.bootstrap);
        c.set("grid", self.grid);
        c
    }

    pub fn kernel(&self, n: usize, index: u64) -> Result<Kernel> {
        match self.generator {
            Generator::Full => gen::full_support(self.order, n),
            Generator::Ring => gen::ring(n),
            Generator::Sparse => {
                gen::random_normalized(self.order, n, self.density, &mut stream(self.seed, index))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DejongRow {
    pub n: usize,
    pub input: InputKind,
    pub influence: f64,
    pub summary: SampleSummary,
}

impl DejongRow {
    /// `E Q^4 - 3`; `E Q^2 = 1` for every input law by normalisation.
    pub fn cumulant(&self) -> Estimate {
        Estimate {
            value: self.summary.m4.value - 3.0,
            se: self.summary.m4.se,
        }
    }
}

/// For each `N` and input law: exact influence, sampled fourth cumulant and
/// empirical `W1`.
pub fn run_dejong(p: &DejongParams) -> Result<Vec<DejongRow>> {
    let mut rows = Vec::new();
    for (i, &n) in p.ns.iter().enumerate() {
        let f = p.kernel(n, i as u64)?;
        for (j, input) in p.inputs.iter().enumerate() {
            let s = derive_seed(p.seed, (i * p.inputs.len() + j) as u64 + (1 << 32));
            let xs = sample_q(&f, &SamplerSpec::new(input.law(n, p.grid)?, s), p.samples)?;
            rows.push(DejongRow {
                n,
                input: *input,
                influence: f.max_influence(),
                summary: SampleSummary::of(&xs, p.bootstrap, derive_seed(s, u64::MAX))?,
            });
        }
    }
    Ok(rows)
}

pub fn dejong_table(rows: &[DejongRow]) -> Table {
    let mut t = Table::new([
        "n",
        "input",
        "influence",
        "influence_mode",
        "kappa4",
        "kappa4_mode",
        "w1",
        "w1_mode",
    ]);
    for r in rows {
        let mut row = vec![r.n.to_string(), r.input.to_string()];
        row.extend(exact(r.influence));
        row.extend(sampled(r.cumulant()));
        row.extend(sampled(r.summary.w1));
        t.push(row);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    /// First order, equal weights.
    Uniform,
    /// Order two, cycle graph.
    Ring,
    /// Order two, the counterexample kernel.
    Counterexample,
    /// Order two, full support.
    Full,
}

impl Component {
    pub fn order(&self) -> usize {
        match self {
            Self::Uniform => 1,
            _ => 2,
        }
    }

    pub fn kernel(&self, n: usize) -> Result<Kernel> {
        match self {
            Self::Uniform => gen::uniform_first_order(n),
            Self::Ring => gen::ring(n),
            Self::Counterexample => gen::counterexample(2, n),
            Self::Full => gen::full_support(2, n),
        }
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "ring" => Ok(Self::Ring),
            "counterexample" => Ok(Self::Counterexample),
            "full" => Ok(Self::Full),
            _ => bad(format!(
                "unknown component {s:?} (uniform, ring, counterexample, full)"
            )),
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Ring => "ring",
            Self::Counterexample => "counterexample",
            Self::Full => "full",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateParams {
    pub components: Vec<Component>,
    pub ns: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    /// Use the computed covariance as target instead of the identity.
    pub computed_target: bool,
}

impl MultivariateParams {
    pub fn from_config(c: &ExperimentConfig) -> Result<Self> {
        let target = c.get("target").unwrap_or("identity");
        let p = Self {
            components: c.list("components", &[Component::Uniform, Component::Ring])?,
            ns: c.list("n", &[16, 64, 256, 1024])?,
            samples: c.parsed("samples", 1_000_000)?,
            seed: c.parsed("seed", 42)?,
            computed_target: match target {
                "identity" => false,
                "computed" => true,
                _ => return bad(format!("target must be identity or computed, got {target:?}")),
            },
        };
        if p.components.is_empty() || p.components.len() > 3 {
            return bad("between one and three components are supported");
        }
        if p.components.windows(2).any(|w| w[0].order() > w[1].order()) {
            return bad("component orders must be nondecreasing");
        }
        if p.ns.iter().any(|&n| n < 3) {
            return bad("every n must be at least 3");
        }
        if p.samples < 2 {
            return bad("need at least two samples");
        }
        Ok(p)
    }

    pub fn to_config(&self) -> ExperimentConfig {
        let mut c = ExperimentConfig::new();
        c.set("experiment", "multivariate");
        c.set_list("components", &self.components);
        c.set_list("n", &self.ns);
        c.set("samples", self.samples);
        c.set("seed", self.seed);
        c.set("target", if self.computed_target { "computed" } else { "identity" });
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateRow {
    pub n: usize,
    pub report: MultivariateReport,
    /// `E Π cos(F_j)`.
    pub test_mean: Stat,
    /// `E Π cos(Z_j)` for `Z ~ N(0, Σ)`.
    pub gaussian_mean: f64,
    /// Largest gap between the first-chaos fourth-moment formula and the
    /// exact law (and enumeration, within the cap), over order-1 components.
    pub first_chaos_deviation: Option<f64>,
}

impl MultivariateRow {
    pub fn discrepancy(&self) -> Stat {
        let d = (self.test_mean.value() - self.gaussian_mean).abs();
        match self.test_mean {
            Stat::Exact(_) => Stat::Exact(d),
            Stat::Sampled(e) => Stat::Sampled(Estimate { value: d, se: e.se }),
        }
    }
}

fn cos_product(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x.cos()).product()
}

/// Sweep over `n` of the exchangeable-pair bound diagnostics at `M2 = M3 = 1` and of
/// the smooth-test discrepancy for `g(x) = Π cos(x_j)`.
pub fn run_multivariate(p: &MultivariateParams) -> Result<Vec<MultivariateRow>> {
    let d = p.components.len();
    p.ns.iter()
        .enumerate()
        .map(|(i, &n)| {
            let law = RademacherLaw::symmetric(n)?;
            let kernels = p
                .components
                .iter()
                .map(|c| c.kernel(n))
                .collect::<Result<Vec<_>>>()?;
            let target = (!p.computed_target).then(|| DMatrix::identity(d, d));
            let input = MultivariateInput::new(kernels.clone(), &law, target, 1.0, 1.0)?;
            let report = multivariate_bound(&input, None)?;
            let test_mean = if n <= exact_cap() {
                let tables = kernels
                    .iter()
                    .map(|f| q_table(f, &law))
                    .collect::<Result<Vec<_>>>()?;
                let mut prod = HypercubeFunction::constant(n, 1.0)?;
                for t in &tables {
                    prod = prod.mul(&t.map(f64::cos))?;
                }
                Stat::Exact(prod.expect(&law)?)
            } else {
                let spec = SamplerSpec::new(InputLaw::Rademacher(law.clone()), derive_seed(p.seed, i as u64));
                let vals = spec.sample_map(n, p.samples, |y| {
                    let fs: Vec<f64> = kernels.iter().map(|f| eval_q_values(f, y)).collect();
                    cos_product(&fs)
                })?;
                Stat::Sampled(Estimate::of(vals))
            };
            let gaussian_mean = gaussian_expectation(&report.target, cos_product)?;
            let mut first_chaos_deviation: Option<f64> = None;
            for (j, f) in kernels.iter().enumerate().filter(|(_, f)| f.order() == 1) {
                let fc = first_chaos_exact(f, &law)?;
                let mut dev = (fc.fourth_formula - fc.fourth_law)
                    .abs()
                    .max((fc.fourth_formula - report.fourth_moments[j]).abs());
                if let Some(e) = fc.fourth_enumerated {
                    dev = dev.max((fc.fourth_formula - e).abs());
                }
                first_chaos_deviation = Some(first_chaos_deviation.unwrap_or(0.0).max(dev));
            }
            Ok(MultivariateRow {
                n,
                report,
                test_mean,
                gaussian_mean,
                first_chaos_deviation,
            })
        })
        .collect()
}

fn route_name(r: Route) -> &'static str {
    match r {
        Route::Enumeration => "enumeration",
        Route::SymmetricAlgebra => "symmetric-algebra",
    }
}

pub fn multivariate_table(rows: &[MultivariateRow]) -> Table {
    let d = rows.first().map_or(0, |r| r.report.orders.len());
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let mut header = vec!["n".to_string(), "route".into()];
    for &(i, j) in &pairs {
        header.extend([format!("sigma_{}{}", i + 1, j + 1), format!("sigma_{}{}_mode", i + 1, j + 1)]);
    }
    for i in 0..d {
        header.extend([format!("kappa4_{}", i + 1), format!("kappa4_{}_mode", i + 1)]);
        header.extend([format!("influence_{}", i + 1), format!("influence_{}_mode", i + 1)]);
    }
    for &(i, j) in &pairs {
        header.extend([format!("var_gamma_{}{}", i + 1, j + 1), format!("var_gamma_{}{}_mode", i + 1, j + 1)]);
    }
    header.extend(
        [
            "rhs",
            "rhs_upper",
            "rhs_mode",
            "test_mean",
            "test_mean_mode",
            "gaussian_mean",
            "discrepancy",
            "discrepancy_mode",
            "first_chaos_deviation",
        ]
        .map(String::from),
    );
    let mut t = Table::new(header);
    for r in rows {
        let rep = &r.report;
        let mut row = vec![r.n.to_string(), route_name(rep.route).to_string()];
        for &(i, j) in &pairs {
            row.extend(exact(rep.covariance[(i, j)]));
        }
        for i in 0..d {
            row.extend(exact(rep.fourth_cumulants[i]));
            row.extend(exact(rep.influences[i]));
        }
        for &(i, j) in &pairs {
            row.extend(exact(rep.gamma_var[(i, j)]));
        }
        row.push(opt(rep.rhs));
        row.push(num(rep.rhs_upper));
        row.push("exact".into());
        row.extend(stat(r.test_mean));
        row.push(num(r.gaussian_mean));
        row.extend(stat(r.discrepancy()));
        row.push(opt(r.first_chaos_deviation));
        t.push(row);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_rows_are_reproducible() {
        let mut c = ExperimentConfig::new();
        c.set_list("n", &[4, 6]);
        c.set("samples", 4000);
        c.set("bootstrap", 10);
        let p = CounterexampleParams::from_config(&c).unwrap();
        let a = counterexample_table(&run_counterexample(&p).unwrap());
        let b = counterexample_table(&run_counterexample(&p).unwrap());
        assert_eq!(a.body(), b.body());
        assert_eq!(a.cell(0, "influence"), Some(num(0.25).as_str()));
        assert_eq!(a.cell(1, "rademacher_m4_mode").map(|s| s.starts_with("mc(se=")), Some(true));
    }

    #[test]
    fn parameter_validation() {
        let mut c = ExperimentConfig::new();
        c.set("q", 1);
        assert!(CounterexampleParams::from_config(&c).is_err());
        let mut c = ExperimentConfig::new();
        c.set("components", "ring,uniform");
        assert!(MultivariateParams::from_config(&c).is_err());
        let mut c = ExperimentConfig::new();
        c.set("generator", "ring");
        c.set("order", 3);
        assert!(DejongParams::from_config(&c).is_err());
        let mut c = ExperimentConfig::new();
        c.set("inputs", "rademacher,cauchy");
        assert!(DejongParams::from_config(&c).is_err());
    }

    #[test]
    fn configs_round_trip() {
        let p = DejongParams::from_config(&ExperimentConfig::new()).unwrap();
        assert_eq!(DejongParams::from_config(&p.to_config()).unwrap(), p);
        let m = MultivariateParams::from_config(&ExperimentConfig::new()).unwrap();
        assert_eq!(MultivariateParams::from_config(&m.to_config()).unwrap(), m);
    }

    #[test]
    fn small_multivariate_sweep_is_exact() {
        let mut c = ExperimentConfig::new();
        c.set_list("n", &[6, 10]);
        let rows = run_multivariate(&MultivariateParams::from_config(&c).unwrap()).unwrap();
        for r in &rows {
            assert!(matches!(r.test_mean, Stat::Exact(_)));
            assert_eq!(r.report.covariance[(0, 1)], 0.0);
            assert!(r.first_chaos_deviation.unwrap() < 1e-10);
            assert!((r.gaussian_mean - (-1f64).exp()).abs() < 1e-12);
        }
        assert!(rows[1].report.best_rhs() < rows[0].report.best_rhs());
    }
}
