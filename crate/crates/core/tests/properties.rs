use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stereounif::coefficients::{expected_h0, gegenbauer_coef, harmonic_dim, sobolev_weight, KernelSpec};
use stereounif::distributions::{NullKind, NullModel};
use stereounif::rng::RandomStream;
use stereounif::sample::SphericalSample;
use stereounif::samplers::sample_uniform_sphere;
use stereounif::special::{reg_inc_beta, reg_inc_beta_inv};
use stereounif::statistics::{evaluate_many, TestStatistic};

/// Random orthogonal matrix: product of `dim` Householder reflections.
fn orthogonal(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m: Vec<f64> = (0..dim * dim).map(|i| if i % (dim + 1) == 0 { 1.0 } else { 0.0 }).collect();
    for _ in 0..dim {
        let v: Vec<f64> = (0..dim).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)).collect();
        let vv: f64 = v.iter().map(|x| x * x).sum();
        // m <- (I - 2 v v'/v'v) m
        for c in 0..dim {
            let dot: f64 = (0..dim).map(|r| v[r] * m[r * dim + c]).sum();
            for r in 0..dim {
                m[r * dim + c] -= 2.0 * v[r] * dot / vv;
            }
        }
    }
    m
}

fn statistics(q: usize) -> Vec<TestStatistic> {
    let mut stats = vec![TestStatistic::Rayleigh { q }, TestStatistic::Bingham { q }];
    for a in [-1.0, -0.3, 0.0, 0.7, 1.0] {
        stats.push(TestStatistic::Stereo(KernelSpec::new(a, q).unwrap()));
        stats.push(TestStatistic::Stereo(KernelSpec::truncated(a, q, 5).unwrap()));
    }
    stats
}

fn uniform(q: usize, n: usize, seed: u64) -> SphericalSample {
    sample_uniform_sphere(q, n, &mut RandomStream::new(seed)).unwrap()
}

fn close(x: f64, y: f64, rel: f64) -> bool {
    (x - y).abs() <= rel * (1.0 + x.abs().max(y.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn statistics_are_rotation_invariant(q in 2usize..6, n in 3usize..40, seed in any::<u64>(), rot in any::<u64>()) {
        let sample = uniform(q, n, seed);
        let rotated = sample.transformed(&orthogonal(q + 1, rot));
        let stats = statistics(q);
        let before = evaluate_many(&stats, &sample).unwrap();
        let after = evaluate_many(&stats, &rotated).unwrap();
        for ((s, x), y) in stats.iter().zip(&before).zip(&after) {
            prop_assert!(close(*x, *y, 1e-9), "{}: {} vs {}", s.label(), x, y);
        }
    }

    #[test]
    fn statistics_are_permutation_invariant(q in 2usize..5, n in 3usize..30, seed in any::<u64>(), shift in 1usize..29) {
        let sample = uniform(q, n, seed);
        let order: Vec<usize> = (0..n).map(|i| (i * 7 + shift) % n).collect();
        // Only a permutation when gcd(7, n) = 1.
        prop_assume!(n % 7 != 0);
        let permuted = sample.subset(&order);
        let stats = statistics(q);
        let before = evaluate_many(&stats, &sample).unwrap();
        let after = evaluate_many(&stats, &permuted).unwrap();
        for ((s, x), y) in stats.iter().zip(&before).zip(&after) {
            prop_assert!(close(*x, *y, 1e-11), "{}: {} vs {}", s.label(), x, y);
        }
    }

    #[test]
    fn coefficients_are_nonnegative_with_exact_zeros(q in 2usize..12, k in 0usize..300, a in -1.0f64..=1.0) {
        let spec = KernelSpec::new(a, q).unwrap();
        let b = gegenbauer_coef(k, &spec);
        prop_assert!(b >= 0.0);
        if a.abs() < 1.0 {
            prop_assert!(b > 0.0);
            if k >= 1 {
                prop_assert!(sobolev_weight(k, &spec) > 0.0);
            }
        }
        for (edge, zero_parity) in [(1.0, 1), (-1.0, 0)] {
            let spec = KernelSpec::new(edge, q).unwrap();
            let b = gegenbauer_coef(k, &spec);
            prop_assert_eq!(b == 0.0, k % 2 == zero_parity);
        }
        prop_assert_eq!(expected_h0(&spec).to_bits(), gegenbauer_coef(0, &spec).to_bits());
    }

    #[test]
    fn harmonic_dimension_matches_factorial_formula(q in 2usize..9, k in 1usize..25) {
        // (2k+q-1)(k+q-2)!/(k!(q-1)!) = (2k+q-1) C(k+q-2, q-2) / (q-1).
        let binom = {
            let (top, r) = (k as u128 + q as u128 - 2, q as u128 - 2);
            let mut acc: u128 = 1;
            for i in 1..=r {
                acc = acc * (top - r + i) / i;
            }
            acc
        };
        let expected = (2 * k as u128 + q as u128 - 1) * binom / (q as u128 - 1);
        prop_assert_eq!(u128::from(harmonic_dim(k, q).unwrap()), expected);
    }

    #[test]
    fn incomplete_beta_monotone_and_invertible(x in 0.0f64..1.0, dx in 0.0f64..0.1, a in 0.2f64..30.0, b in 0.2f64..30.0) {
        let y = (x + dx).min(1.0);
        let fx = reg_inc_beta(x, a, b).unwrap();
        let fy = reg_inc_beta(y, a, b).unwrap();
        prop_assert!(fy >= fx - 1e-15);
        prop_assume!(fx > 1e-12 && fx < 1.0 - 1e-12);
        let back = reg_inc_beta_inv(fx, a, b).unwrap();
        prop_assert!((reg_inc_beta(back, a, b).unwrap() - fx).abs() <= 1e-9);
    }

    #[test]
    fn decision_agrees_with_p_value(
        draws in proptest::collection::vec(-50.0f64..50.0, 200..600),
        t in -60.0f64..60.0,
        alpha in 0.01f64..0.3,
    ) {
        let stat = TestStatistic::Rayleigh { q: 2 };
        let model = NullModel::from_draws(NullKind::ExactMc, stat, draws, 10, 0).unwrap();
        let crit = model.critical_value(alpha).unwrap().value;
        let p = model.p_value(t);
        prop_assert!((0.0..=1.0).contains(&p));
        if t > crit {
            prop_assert!(p <= alpha + 1e-12, "t = {t} > crit = {crit} but p = {p}");
        } else {
            prop_assert!(p >= alpha - 1.0 / (model.m() as f64 + 1.0), "t = {t} <= crit = {crit} but p = {p}");
        }
    }
}
