use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use rchaos_core::bounds::{c1, c2, first_chaos_exact, gamma_p, leak_bound, offdiag_leak_sq, wasserstein_exact};
use rchaos_core::chaos::q_table;
use rchaos_core::kernel::contraction_norm_sq;
use rchaos_core::ou::apply_pt;
use rchaos_core::{gen, walsh_decompose, HypercubeFunction, Kernel, RademacherLaw};

fn case(seed: u64, p: usize, n: usize, biased: bool) -> (Kernel, RademacherLaw) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let f = gen::random_normalized(p, n, 0.6, &mut rng).unwrap();
    let law = if biased {
        gen::random_law(n, 0.1, 0.9, &mut rng).unwrap()
    } else {
        RademacherLaw::symmetric(n).unwrap()
    };
    (f, law)
}

#[test]
fn frozen_constants() {
    // γ_p = (2p)!/p! * sum_r r! C(p,r)^2, summed by hand.
    assert_eq!(gamma_p(1).unwrap(), 2.0);
    assert_eq!(gamma_p(2).unwrap(), 72.0);
    assert_eq!(gamma_p(3).unwrap(), 3960.0);
    assert_relative_eq!(c1(), 2.131_217_894_1, epsilon = 1e-10);
    assert_relative_eq!(c2(2).unwrap(), (0.797_884_560_8 + 1.632_993_161_9) * 72f64.sqrt(), epsilon = 1e-9);
}

#[test]
fn counterexample_influence_does_not_decay() {
    for q in 2..=4usize {
        let qf: f64 = (1..=q).map(|k| k as f64).product();
        for n in [q, q + 3, 50, 400] {
            let f = gen::counterexample(q, n).unwrap();
            assert_relative_eq!(f.norm_sq(), 1.0 / qf, max_relative = 1e-12);
            assert_relative_eq!(f.max_influence(), 1.0 / (q as f64 * qf), max_relative = 1e-15);
        }
    }
}

#[test]
fn full_support_influence_formula() {
    for n in [4usize, 10, 40] {
        let f = gen::full_support(2, n).unwrap();
        // 2! * 2! * C(n, 2) * c^2 = 1.
        let c2 = 1.0 / (2 * n * (n - 1)) as f64;
        assert_relative_eq!(f.max_influence(), (n - 1) as f64 * c2, max_relative = 1e-12);
        assert_relative_eq!(f.max_influence(), 1.0 / (2 * n) as f64, max_relative = 1e-12);
    }
}

#[test]
fn single_rademacher_distance() {
    // 2 (∫_0^1 (Φ - 1/2) + ∫_1^∞ (1 - Φ)) = 4Φ(1) + 4φ(1) - 2φ(0) - 3.
    let big_phi_1 = 0.841_344_746_068_542_9;
    let phi = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let expected = 4.0 * big_phi_1 + 4.0 * phi(1.0) - 2.0 * phi(0.0) - 3.0;
    let h = Kernel::first_order(&[1.0]).unwrap();
    let w = wasserstein_exact(&h, &RademacherLaw::symmetric(1).unwrap()).unwrap();
    assert_relative_eq!(w, expected, epsilon = 1e-10);
    assert_relative_eq!(w, 0.535_377_3, epsilon = 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn influences_sum_to_norm(seed in any::<u64>(), p in 1usize..4, n in 4usize..12) {
        let (f, _) = case(seed, p, n, false);
        let total: f64 = f.influences().iter().sum();
        prop_assert!((total - f.norm_sq()).abs() <= 1e-12);
        let m = f.max_influence();
        prop_assert!(m <= f.norm_sq() + 1e-12);
        prop_assert!(m * n as f64 >= f.norm_sq() - 1e-12);
    }

    #[test]
    fn leak_is_dominated(seed in any::<u64>(), p in 1usize..4, q in 1usize..4, n in 4usize..10) {
        let (f, _) = case(seed, p, n, false);
        let (g, _) = case(seed ^ 0x9e37, q, n, false);
        prop_assert!(offdiag_leak_sq(&f, &g).unwrap() <= leak_bound(&f, &g) + 1e-12);
    }

    #[test]
    fn contraction_cauchy_schwarz(seed in any::<u64>(), p in 2usize..4, n in 4usize..10) {
        let (f, _) = case(seed, p, n, false);
        for r in 1..p {
            prop_assert!(contraction_norm_sq(&f, &f, r).unwrap() <= f.norm_sq().powi(2) + 1e-12);
        }
    }

    #[test]
    fn parseval(seed in any::<u64>(), n in 1usize..9, biased: bool) {
        let (_, law) = case(seed, 1, n.max(1), biased);
        let f = HypercubeFunction::from_fn(n, |a| ((a.wrapping_mul(seed | 1) >> 3) % 17) as f64 - 8.0).unwrap();
        let d = walsh_decompose(&f, &law).unwrap();
        let e2 = f.moment(&law, 2).unwrap();
        prop_assert!((e2 - d.second_moment()).abs() <= 1e-9 * e2.max(1.0));
    }

    #[test]
    fn semigroup_property(seed in any::<u64>(), p in 1usize..4, n in 4usize..8, s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let (f, law) = case(seed, p, n, true);
        let d = walsh_decompose(&q_table(&f, &law).unwrap().mul(&q_table(&f, &law).unwrap()).unwrap(), &law).unwrap();
        let two_step = apply_pt(&apply_pt(&d, s).unwrap(), t).unwrap();
        prop_assert!(two_step.max_abs_diff(&apply_pt(&d, s + t).unwrap()) <= 1e-12);
    }

    #[test]
    fn first_chaos_fourth_moment(seed in any::<u64>(), n in 1usize..12, biased: bool) {
        let (h, law) = case(seed, 1, n, biased);
        let r = first_chaos_exact(&h, &law).unwrap();
        prop_assert!((r.fourth_formula - r.fourth_law).abs() <= 1e-10);
        prop_assert!(r.kolmogorov <= r.kolmogorov_bound + 1e-12);
        prop_assert!(r.report.lhs.unwrap().value() <= r.report.rhs + 1e-12);
    }
}
