//! Reproducible Monte Carlo draws of homogeneous sums over independent inputs.
//!
//! Streams are derived as `derive_seed(seed, index)`. Samples are generated
//! in fixed blocks of [`BLOCK`] draws, block `b` using stream `b`, so output is
//! bit-identical for any thread count.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::chaos::eval_q_values;
use crate::error::{input, Result};
use crate::kernel::Kernel;
use crate::law::RademacherLaw;

/// Number of draws generated from one derived stream.
pub const BLOCK: usize = 1024;

/// SplitMix64 finaliser applied to `seed` offset by `index` golden-ratio steps.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, index: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(derive_seed(seed, index))
}

/// Finite centred law with unit variance, given by atoms and probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscreteLaw {
    /// Validates that probabilities are positive, sum to one, and that the law
    /// is centred with unit variance, each to `1e-12`.
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return input("a discrete law needs matching, nonempty value and probability lists");
        }
        if probs.iter().any(|&p| !(p > 0.0)) || values.iter().any(|v| !v.is_finite()) {
            return input("probabilities must be positive and values finite");
        }
        let total: f64 = probs.iter().sum();
        let mean: f64 = values.iter().zip(&probs).map(|(v, p)| v * p).sum();
        let second: f64 = values.iter().zip(&probs).map(|(v, p)| v * v * p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return input(format!("probabilities sum to {total}"));
        }
        if mean.abs() > 1e-12 || (second - 1.0).abs() > 1e-12 {
            return input(format!(
                "law must be centred with unit variance (mean {mean:e}, second moment {second})"
            ));
        }
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { values, cumulative })
    }

    /// Uniform law on `m` equally spaced points, rescaled to unit variance.
    /// Approaches the uniform law on `[-sqrt 3, sqrt 3]` as `m` grows.
    pub fn uniform_grid(m: usize) -> Result<Self> {
        if m < 2 {
            return input("a uniform grid needs at least two points");
        }
        let raw: Vec<f64> = (0..m).map(|i| 2.0 * i as f64 - (m - 1) as f64).collect();
        let var = raw.iter().map(|x| x * x).sum::<f64>() / m as f64;
        let values = raw.iter().map(|x| x / var.sqrt()).collect();
        Self::new(values, vec![1.0 / m as f64; m])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn fourth_moment(&self) -> f64 {
        let mut prev = 0.0;
        self.values
            .iter()
            .zip(&self.cumulative)
            .map(|(v, &c)| {
                let p = c - prev;
                prev = c;
                v.powi(4) * p
            })
            .sum()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.values[i.min(self.values.len() - 1)]
    }
}

/// Distribution of the independent inputs `Ξ`.
#[derive(Debug, Clone, PartialEq)]
pub enum InputLaw {
    /// Normalised Rademacher coordinates `Y` under the given law.
    Rademacher(RademacherLaw),
    Gaussian,
    Custom(DiscreteLaw),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSpec {
    pub inputs: InputLaw,
    pub seed: u64,
}

impl SamplerSpec {
    pub fn new(inputs: InputLaw, seed: u64) -> Self {
        Self { inputs, seed }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if let InputLaw::Rademacher(law) = &self.inputs {
            if law.dim() < dim {
                return input(format!(
                    "law covers {} coordinates, {dim} are needed",
                    law.dim()
                ));
            }
        }
        Ok(())
    }

    /// Fills `buf` with one draw of the first `buf.len()` inputs.
    fn fill<R: RngCore>(&self, rng: &mut R, buf: &mut [f64]) {
        match &self.inputs {
            InputLaw::Rademacher(law) if law.is_symmetric() => {
                for chunk in buf.chunks_mut(64) {
                    let bits = rng.next_u64();
                    for (i, y) in chunk.iter_mut().enumerate() {
                        *y = if bits >> i & 1 == 1 { 1.0 } else { -1.0 };
                    }
                }
            }
            InputLaw::Rademacher(law) => {
                for (k, y) in buf.iter_mut().enumerate() {
                    let plus = rng.random::<f64>() < law.p(k);
                    *y = law.normalized_value(k, plus);
                }
            }
            InputLaw::Gaussian => {
                for y in buf.iter_mut() {
                    *y = rng.sample(StandardNormal);
                }
            }
            InputLaw::Custom(d) => {
                for y in buf.iter_mut() {
                    *y = d.draw(rng);
                }
            }
        }
    }

    /// `n` draws of `stat(ξ_1..ξ_dim)`, in sample order.
    pub fn sample_map<T, F>(&self, dim: usize, n: usize, stat: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&[f64]) -> T + Sync,
    {
        self.check_dim(dim)?;
        let blocks = n.div_ceil(BLOCK);
        let out: Vec<Vec<T>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream(self.seed, b as u64);
                let len = BLOCK.min(n - b * BLOCK);
                let mut buf = vec![0.0; dim];
                (0..len)
                    .map(|_| {
                        self.fill(&mut rng, &mut buf);
                        stat(&buf)
                    })
                    .collect()
            })
            .collect();
        Ok(out.into_iter().flatten().collect())
    }
}

/// Number of leading coordinates a set of kernels touches.
pub fn coords_used(kernels: &[&Kernel]) -> usize {
    kernels
        .iter()
        .filter_map(|f| f.support_max())
        .max()
        .map_or(0, |m| m + 1)
}

/// `n` independent draws of `Q_d(f; Ξ)`.
pub fn sample_q(f: &Kernel, spec: &SamplerSpec, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return input("sample count must be positive");
    }
    spec.sample_map(coords_used(&[f]), n, |y| eval_q_values(f, y))
}

/// `n` joint draws of `(Q(f_1; Ξ), .., Q(f_d; Ξ))` sharing the same inputs.
pub fn sample_joint(kernels: &[Kernel], spec: &SamplerSpec, n: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return input("sample count must be positive");
    }
    let refs: Vec<&Kernel> = kernels.iter().collect();
    spec.sample_map(coords_used(&refs), n, |y| {
        kernels.iter().map(|f| eval_q_values(f, y)).collect()
    })
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// Mean and standard error of `xs`.
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
        for x in xs {
            n += 1.0;
            let d = x - mean;
            mean += d / n;
            m2 += d * (x - mean);
        }
        let var = if n > 1.0 { m2 / (n - 1.0) } else { 0.0 };
        Self {
            value: mean,
            se: (var / n).sqrt(),
        }
    }

    /// Number of standard errors separating the estimate from `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.se == 0.0 {
            return if self.value == target { 0.0 } else { f64::INFINITY };
        }
        (self.value - target) / self.se
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        self.z_score(target).abs() <= sigmas
    }
}

/// A statistic together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stat {
    Exact(f64),
    Sampled(Estimate),
}

impl Stat {
    pub fn value(&self) -> f64 {
        match self {
            Stat::Exact(v) => *v,
            Stat::Sampled(e) => e.value,
        }
    }

    pub fn se(&self) -> Option<f64> {
        match self {
            Stat::Exact(_) => None,
            Stat::Sampled(e) => Some(e.se),
        }
    }

    /// `exact` or `mc(se=...)`.
    pub fn mode(&self) -> String {
        match self {
            Stat::Exact(_) => "exact".to_string(),
            Stat::Sampled(e) => format!("mc(se={:.3e})", e.se),
        }
    }
}

/// Estimate of `E[X^m]` from samples of `X`.
pub fn moment_estimate(samples: &[f64], m: i32) -> Estimate {
    Estimate::of(samples.iter().map(|x| x.powi(m)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_distinct_and_stable() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn discrete_laws_are_checked() {
        assert!(DiscreteLaw::new(vec![-1.0, 1.0], vec![0.5, 0.5]).is_ok());
        assert!(DiscreteLaw::new(vec![-1.0, 2.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteLaw::new(vec![-2.0, 2.0], vec![0.5, 0.5]).is_err());
        let u = DiscreteLaw::uniform_grid(64).unwrap();
        assert!((u.fourth_moment() - 1.8).abs() < 1e-2);
        assert!(u.values().iter().all(|v| v.abs() <= 3f64.sqrt()));
    }

    #[test]
    fn first_coordinate_is_fair_sign() {
        let f = Kernel::indicator(0, 1).unwrap();
        let spec = SamplerSpec::new(InputLaw::Rademacher(RademacherLaw::symmetric(1).unwrap()), 9);
        let xs = sample_q(&f, &spec, 20_000).unwrap();
        assert!(xs.iter().all(|&x| x == 1.0 || x == -1.0));
        let plus = Estimate::of(xs.iter().map(|&x| f64::from(x > 0.0)));
        assert!(plus.within(0.5, 4.0));
    }

    #[test]
    fn biased_inputs_are_normalised() {
        let law = RademacherLaw::new(vec![0.2, 0.9]).unwrap();
        let f = Kernel::first_order(&[0.0, 1.0]).unwrap();
        let spec = SamplerSpec::new(InputLaw::Rademacher(law), 5);
        let xs = sample_q(&f, &spec, 50_000).unwrap();
        assert!(moment_estimate(&xs, 1).within(0.0, 4.0));
        assert!(moment_estimate(&xs, 2).within(1.0, 4.0));
    }

    #[test]
    fn gaussian_product_has_fourth_moment_nine() {
        let f = Kernel::from_entries(2, 2, [(vec![0, 1], 0.5)]).unwrap();
        let spec = SamplerSpec::new(InputLaw::Gaussian, 11);
        let xs = sample_q(&f, &spec, 200_000).unwrap();
        assert!(moment_estimate(&xs, 4).within(9.0, 4.0));
    }

    #[test]
    fn output_is_reproducible() {
        let f = Kernel::from_entries(2, 3, [(vec![0, 2], 0.5)]).unwrap();
        let spec = SamplerSpec::new(InputLaw::Custom(DiscreteLaw::uniform_grid(5).unwrap()), 3);
        let a = sample_q(&f, &spec, 3000).unwrap();
        let b = sample_q(&f, &spec, 3000).unwrap();
        assert_eq!(a, b);
        let prefix = sample_q(&f, &spec, 1500).unwrap();
        assert_eq!(&a[..1500], &prefix[..]);
    }
}
