use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rchaos_core::bounds::{
    dw_bound_univariate, first_chaos_exact, multivariate_bound, Fallback, MultivariateInput, Route,
};
use rchaos_core::chaos::q_table;
use rchaos_core::hypercube::set_exact_cap;
use rchaos_core::ou::{exchangeability_check, flip_frequencies, mehler_check, regression_check};
use rchaos_core::sampling::{coords_used, derive_seed, moment_estimate, sample_q, InputLaw, SamplerSpec};
use rchaos_core::{walsh_decompose, Error, Kernel, RademacherLaw};
use rchaos_cli::config::ExperimentConfig;
use rchaos_cli::experiments::{
    counterexample_table, dejong_table, multivariate_table, run_counterexample, run_dejong, run_multivariate,
    CounterexampleParams, DejongParams, InputKind, MultivariateParams,
};
use rchaos_cli::table::{exact, num, opt, stat, Table};
use rchaos_cli::tables::read_function;
use rchaos_cli::verify::{run_verify, Suite};

/// Rademacher chaos experiments, bounds and invariant suites.
#[derive(Parser, Debug)]
#[command(name = "rchaos", version)]
struct Cli {
    /// Base seed; overrides any seed in --config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for CSV and resolved config files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Largest dimension enumerated exactly.
    #[arg(long, global = true)]
    exact_cap: Option<usize>,
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run invariant suites: algebra, chaos, coupling, bounds or all.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Coupled pairs per flip-frequency check.
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
    },
    /// Evaluate a normal-approximation bound.
    #[command(subcommand)]
    Bound(BoundCommand),
    /// Walsh decomposition of a function table.
    Decompose {
        table: PathBuf,
        #[arg(long)]
        law: Option<PathBuf>,
    },
    /// Coupling diagnostics for a kernel over a grid of times.
    Couple {
        kernel: PathBuf,
        #[arg(long)]
        law: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0])]
        t: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4])]
        regression_grid: Vec<f64>,
    },
    /// Counterexample sweep (keys: q, n, samples, seed, bootstrap).
    Counterexample(Overrides),
    /// Sweep over input laws (keys: generator, order, n, inputs, samples, seed, density, bootstrap, grid).
    Dejong(Overrides),
    /// Multivariate sweep (keys: components, n, samples, seed, target).
    Multivariate(Overrides),
    /// Draw samples of Q(f; inputs).
    Sample {
        kernel: PathBuf,
        #[arg(long)]
        law: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Inputs::Rademacher)]
        inputs: Inputs,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 1000)]
        grid: usize,
    },
}

#[derive(Subcommand, Debug)]
enum BoundCommand {
    /// Wasserstein bound for one normalised kernel.
    Univariate {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        law: Option<PathBuf>,
        /// Samples used beyond the exact cap.
        #[arg(long = "mc-samples", default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 200)]
        bootstrap: usize,
    },
    /// Exchangeable-pair bound for a vector of kernels.
    Multivariate {
        #[arg(long, required = true, num_args = 1..)]
        kernels: Vec<PathBuf>,
        #[arg(long)]
        law: Option<PathBuf>,
        /// Use the identity as target covariance instead of the computed one.
        #[arg(long)]
        identity: bool,
        #[arg(long, default_value_t = 1.0)]
        m2: f64,
        #[arg(long, default_value_t = 1.0)]
        m3: f64,
        #[arg(long, value_enum)]
        route: Option<RouteArg>,
    },
}

#[derive(Args, Debug)]
struct Overrides {
    /// Configuration overrides as key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Inputs {
    Rademacher,
    Gaussian,
    Uniform,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RouteArg {
    Enumeration,
    Algebra,
}

/// Whether all checks performed by a command held.
type Outcome = anyhow::Result<bool>;

fn read_law(path: Option<&Path>, dim: usize) -> anyhow::Result<RademacherLaw> {
    match path {
        Some(p) => Ok(RademacherLaw::read_file(p).with_context(|| format!("reading law {}", p.display()))?),
        None => Ok(RademacherLaw::symmetric(dim)?),
    }
}

fn read_kernel(path: &Path) -> anyhow::Result<Kernel> {
    Ok(Kernel::read_file(path).with_context(|| format!("reading kernel {}", path.display()))?)
}

fn write_outputs(out: &Path, name: &str, table: &Table, config: &ExperimentConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let csv = out.join(format!("{name}.csv"));
    table.write(&csv)?;
    config.write_file(out.join(format!("{name}.config")))?;
    println!("wrote {}", csv.display());
    Ok(())
}

fn experiment_config(cli: &Cli, sets: &[String]) -> anyhow::Result<ExperimentConfig> {
    let mut c = match &cli.config {
        Some(p) => ExperimentConfig::read_file(p)?,
        None => ExperimentConfig::new(),
    };
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Input(format!("override {s:?} is not key=value")))?;
        c.set(k.trim(), v.trim());
    }
    if let Some(seed) = cli.seed {
        c.set("seed", seed);
    }
    Ok(c)
}

fn run(cli: &Cli) -> Outcome {
    let seed = cli.seed.unwrap_or(42);
    match &cli.command {
        Command::Verify { suite, trials, samples } => {
            let suite: Suite = suite.parse()?;
            let summary = run_verify(suite, seed, *trials, *samples)?;
            let mut c = ExperimentConfig::new();
            c.set("suite", suite);
            c.set("seed", seed);
            c.set("trials", trials);
            c.set("samples", samples);
            write_outputs(&cli.out, "verify", &summary.table(), &c)?;
            for r in summary.failures() {
                println!("FAIL [{} trial {}] {}", r.suite, r.trial, r.check);
            }
            let failed = summary.failures().count();
            println!("{} checks, {} failed", summary.rows.len(), failed);
            Ok(failed == 0)
        }
        Command::Bound(b) => bound(cli, b, seed),
        Command::Decompose { table, law } => {
            let f = read_function(table).with_context(|| format!("reading table {}", table.display()))?;
            let law = read_law(law.as_deref(), f.dim())?;
            let d = walsh_decompose(&f, &law)?;
            let mut t = Table::new(["order", "key", "coefficient"]);
            t.push(vec!["0".into(), String::new(), num(d.constant())]);
            for (order, k) in d.kernels() {
                for (key, v) in k.iter() {
                    let key: Vec<String> = key.iter().map(|i| (i + 1).to_string()).collect();
                    t.push(vec![order.to_string(), key.join(" "), num(v)]);
                }
            }
            let mut c = ExperimentConfig::new();
            c.set("table", table.display());
            c.set_list("law", law.probs());
            write_outputs(&cli.out, "decompose", &t, &c)?;
            Ok(true)
        }
        Command::Couple {
            kernel,
            law,
            t,
            samples,
            regression_grid,
        } => {
            let f = read_kernel(kernel)?;
            let law = read_law(law.as_deref(), f.dim())?;
            let ft = q_table(&f.with_dim(law.dim())?, &law)?;
            let mut table = Table::new([
                "t",
                "mehler_deviation",
                "exchange_asymmetry",
                "pair_mass",
                "flip_max_abs_z",
            ]);
            let mut ok = true;
            for (i, &tt) in t.iter().enumerate() {
                let mehler = mehler_check(&ft, tt, &law)?;
                let ex = exchangeability_check(&f, tt, &law)?;
                let flips = flip_frequencies(&law, tt, *samples, derive_seed(seed, i as u64))?;
                let z = flips
                    .iter()
                    .flat_map(|s| [s.down.z_score(s.expected).abs(), s.up.z_score(s.expected).abs()])
                    .fold(0.0, f64::max);
                ok &= mehler <= 1e-10 && ex.passed(1e-10);
                table.push(vec![num(tt), num(mehler), num(ex.max_asymmetry), num(ex.total_mass), num(z)]);
            }
            let reg = regression_check(&f, &law, regression_grid)?;
            let mut rt = Table::new(["t", "drift_dist", "square_dist", "fourth_rate", "rho"]);
            for r in &reg.rows {
                rt.push(vec![num(r.t), num(r.drift_dist), num(r.square_dist), num(r.fourth_rate), num(reg.rho)]);
            }
            let mut c = ExperimentConfig::new();
            c.set("kernel", kernel.display());
            c.set_list("law", law.probs());
            c.set_list("t", t);
            c.set("samples", samples);
            c.set("seed", seed);
            c.set_list("regression_grid", regression_grid);
            write_outputs(&cli.out, "couple", &table, &c)?;
            write_outputs(&cli.out, "regression", &rt, &c)?;
            Ok(ok)
        }
        Command::Counterexample(o) => {
            let p = CounterexampleParams::from_config(&experiment_config(cli, &o.set)?)?;
            let rows = run_counterexample(&p)?;
            write_outputs(&cli.out, "counterexample", &counterexample_table(&rows), &p.to_config())?;
            Ok(true)
        }
        Command::Dejong(o) => {
            let p = DejongParams::from_config(&experiment_config(cli, &o.set)?)?;
            let rows = run_dejong(&p)?;
            write_outputs(&cli.out, "dejong", &dejong_table(&rows), &p.to_config())?;
            Ok(true)
        }
        Command::Multivariate(o) => {
            let p = MultivariateParams::from_config(&experiment_config(cli, &o.set)?)?;
            let rows = run_multivariate(&p)?;
            write_outputs(&cli.out, "multivariate", &multivariate_table(&rows), &p.to_config())?;
            Ok(true)
        }
        Command::Sample {
            kernel,
            law,
            inputs,
            samples,
            grid,
        } => {
            let f = read_kernel(kernel)?;
            let kind = match inputs {
                Inputs::Rademacher => InputKind::Rademacher,
                Inputs::Gaussian => InputKind::Gaussian,
                Inputs::Uniform => InputKind::Uniform,
            };
            let input_law = match (kind, law) {
                (InputKind::Rademacher, Some(_)) => {
                    InputLaw::Rademacher(read_law(law.as_deref(), coords_used(&[&f]))?)
                }
                _ => kind.law(f.dim(), *grid)?,
            };
            let xs = sample_q(&f, &SamplerSpec::new(input_law, seed), *samples)?;
            let mut t = Table::new(["index", "value"]);
            for (i, x) in xs.iter().enumerate() {
                t.push(vec![i.to_string(), num(*x)]);
            }
            let mut c = ExperimentConfig::new();
            c.set("kernel", kernel.display());
            c.set("inputs", kind);
            c.set("samples", samples);
            c.set("seed", seed);
            c.set("grid", grid);
            write_outputs(&cli.out, "sample", &t, &c)?;
            let (m2, m4) = (moment_estimate(&xs, 2), moment_estimate(&xs, 4));
            println!("E[Q^2] = {:.6} ± {:.2e}, E[Q^4] = {:.6} ± {:.2e}", m2.value, m2.se, m4.value, m4.se);
            Ok(true)
        }
    }
}

fn bound(cli: &Cli, b: &BoundCommand, seed: u64) -> Outcome {
    match b {
        BoundCommand::Univariate {
            kernel,
            law,
            samples,
            bootstrap,
        } => {
            let f = read_kernel(kernel)?;
            let law = read_law(law.as_deref(), f.dim())?;
            let fallback = Fallback {
                samples: *samples,
                seed,
                bootstrap: *bootstrap,
            };
            let r = dw_bound_univariate(&f, &law, &fallback)?;
            let mut t = Table::new(["quantity", "value", "mode"]);
            let mut put = |name: &str, cells: [String; 2]| {
                let [v, m] = cells;
                t.push(vec![name.into(), v, m]);
            };
            put("second_moment", stat(r.second_moment));
            put("fourth_moment", stat(r.fourth_moment));
            put("fourth_cumulant", stat(r.fourth_cumulant));
            put("influence", exact(r.influence));
            for (k, v) in &r.contraction_norms {
                put(&format!("contraction_norm_sq_{k}"), exact(*v));
            }
            if let Some(l) = r.lhs {
                put("distance", stat(l));
            }
            put("bound", exact(r.rhs));
            for c in &r.constants {
                put(&c.name, exact(c.value));
            }
            if f.order() == 1 {
                let fc = first_chaos_exact(&f, &law)?;
                put("first_chaos_fourth_formula", exact(fc.fourth_formula));
                put("kolmogorov", exact(fc.kolmogorov));
                put("kolmogorov_bound", exact(fc.kolmogorov_bound));
                put("influence_bound", exact(fc.dw_influence_bound));
                if let Some(h) = fc.homogeneous {
                    put("homogeneous_coefficient", exact(h.coefficient));
                    put("homogeneous_dw", [opt(h.dw_from_cumulant), "exact".into()]);
                }
            }
            for n in &r.notes {
                println!("note: {n}");
            }
            let check = r.check(3.0);
            let mut c = ExperimentConfig::new();
            c.set("kernel", kernel.display());
            c.set_list("law", law.probs());
            c.set("samples", samples);
            c.set("bootstrap", bootstrap);
            c.set("seed", seed);
            write_outputs(&cli.out, "bound", &t, &c)?;
            match check {
                Some(c) => {
                    println!("{c}");
                    Ok(c.holds(1e-10))
                }
                None => Ok(true),
            }
        }
        BoundCommand::Multivariate {
            kernels,
            law,
            identity,
            m2,
            m3,
            route,
        } => {
            let ks = kernels.iter().map(|p| read_kernel(p)).collect::<anyhow::Result<Vec<_>>>()?;
            let dim = ks.iter().map(Kernel::dim).max().unwrap_or(0);
            let law = read_law(law.as_deref(), dim)?;
            let d = ks.len();
            let target = identity.then(|| DMatrix::identity(d, d));
            let input = MultivariateInput::new(ks, &law, target, *m2, *m3)?;
            let route = route.map(|r| match r {
                RouteArg::Enumeration => Route::Enumeration,
                RouteArg::Algebra => Route::SymmetricAlgebra,
            });
            let r = multivariate_bound(&input, route)?;
            let mut t = Table::new(["quantity", "value", "mode"]);
            for i in 0..d {
                for j in 0..d {
                    let [v, m] = exact(r.covariance[(i, j)]);
                    t.push(vec![format!("sigma_{}{}", i + 1, j + 1), v, m]);
                    let [v, m] = exact(r.gamma_var[(i, j)]);
                    t.push(vec![format!("var_gamma_{}{}", i + 1, j + 1), v, m]);
                }
                let [v, m] = exact(r.fourth_cumulants[i]);
                t.push(vec![format!("kappa4_{}", i + 1), v, m]);
                let [v, m] = exact(r.influences[i]);
                t.push(vec![format!("influence_{}", i + 1), v, m]);
            }
            t.push(vec!["rhs".into(), opt(r.rhs), "exact".into()]);
            t.push(vec!["rhs_upper".into(), num(r.rhs_upper), "exact".into()]);
            let mut c = ExperimentConfig::new();
            c.set_list(
                "kernels",
                &kernels.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            );
            c.set_list("law", law.probs());
            c.set("identity", identity);
            c.set("m2", m2);
            c.set("m3", m3);
            write_outputs(&cli.out, "bound", &t, &c)?;
            println!("rhs = {}, rhs_upper = {}", opt(r.rhs), num(r.rhs_upper));
            Ok(true)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Resource(_)) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    if let Some(cap) = cli.exact_cap {
        set_exact_cap(cap);
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

