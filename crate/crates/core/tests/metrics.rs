use edgelab::constants::{berry_esseen_bound, evaluate_constant, ConstantName, Prefactors};
use edgelab::metrics::{
    build_mollifier, estimate_cumulants, fit_rate, ks_distance_to_normal, multivariate_gaussian_distance,
    normal_cdf, two_sample_ks, EcdfSummary,
};
use edgelab::overlap::{joint_covariance, JointOverlapMatrix};
use edgelab::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

/// KS distance to `Φ` as the supremum over a dense grid that also probes
/// both sides of every sample point.
fn ks_grid_oracle(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let ecdf = |t: f64| xs.iter().filter(|&&x| x <= t).count() as f64 / n;
    let mut probes: Vec<f64> = (0..=4000).map(|k| -8.0 + 16.0 * k as f64 / 4000.0).collect();
    for &x in xs {
        probes.push(x);
        probes.push(x - 1e-12 * (1.0 + x.abs()));
    }
    probes.into_iter().map(|t| (ecdf(t) - normal_cdf(t)).abs()).fold(0.0, f64::max)
}

fn gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ks_distance_matches_grid_oracle(xs in prop::collection::vec(-4.0f64..4.0, 1..60)) {
        let fast = ks_distance_to_normal(&EcdfSummary::new(xs.clone()).unwrap());
        let oracle = ks_grid_oracle(&xs);
        prop_assert!((fast - oracle).abs() < 1e-9, "{} vs {}", fast, oracle);
    }

    #[test]
    fn mollifier_is_sandwiched_between_indicators(x in -3.0f64..3.0, delta in 1e-3f64..1.0, y in -5.0f64..5.0) {
        let f = build_mollifier(x, delta).unwrap();
        let v = f.eval(y);
        let inner = if y <= x { 1.0 } else { 0.0 };
        let outer = if y < x + 2.0 * delta { 1.0 } else { 0.0 };
        prop_assert!(inner <= v + 1e-14 && v <= outer + 1e-14, "f({}) = {}", y, v);
    }

    #[test]
    fn mollifier_is_non_increasing(x in -1.0f64..1.0, delta in 1e-2f64..1.0, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let f = build_mollifier(x, delta).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(f.eval(lo) + 1e-14 >= f.eval(hi));
    }

    #[test]
    fn rate_fit_recovers_exact_power_laws(exponent in -2.0f64..0.0, log_c in -5.0f64..5.0) {
        let pts: Vec<(f64, f64)> = [100.0, 300.0, 1000.0, 4000.0].iter().map(|&n: &f64| (n, log_c.exp() * n.powf(exponent))).collect();
        let fit = fit_rate(&pts).unwrap();
        prop_assert!((fit.exponent - exponent).abs() < 1e-10);
        prop_assert!((fit.intercept - log_c).abs() < 1e-9);
        prop_assert!(fit.residual < 1e-10);
    }

    #[test]
    fn constants_grow_with_degree_and_shrink_with_epsilon(d in 3usize..20, eps in 0.01f64..0.9) {
        let p = Prefactors::default();
        let names = [
            ConstantName::LocalLaw,
            ConstantName::OverlapSde,
            ConstantName::SecondMoment,
            ConstantName::FourthMoment,
            ConstantName::Decorrelation,
            ConstantName::BackwardStability,
            ConstantName::BerryEsseen,
        ];
        for name in names {
            let base = evaluate_constant(name, d, eps, &p).unwrap();
            prop_assert!(base > 0.0);
            prop_assert!(evaluate_constant(name, d + 1, eps, &p).unwrap() > base);
            prop_assert!(evaluate_constant(name, d, eps * 1.05_f64.min(0.99 / eps), &p).unwrap() < base);
        }
    }

    #[test]
    fn berry_esseen_bound_is_constant_times_n_factor(n in 2.0f64..1e9, d in 3usize..10, eps in 0.0f64..0.9) {
        let b = berry_esseen_bound(n, d, eps, 1.0).unwrap();
        prop_assert!((b.n_factor - n.powf(-1.0 / 6.0 + eps)).abs() <= 1e-12 * b.n_factor);
        prop_assert!((b.bound - b.constant * b.n_factor).abs() <= 1e-12 * b.bound);
    }
}

#[test]
fn cumulants_are_calibrated_on_known_laws() {
    let n = 100_000;
    let mut rng = rng_from_seed(31);
    let normal: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let root3 = 3f64.sqrt();
    let uniform: Vec<f64> = (0..n).map(|_| rng.random_range(-root3..root3)).collect();
    let exponential: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    // Cumulants k1..k4: standard normal, unit-variance uniform, Exp(1).
    let cases: [(&str, &[f64], [f64; 4]); 3] = [
        ("normal", &normal, [0.0, 1.0, 0.0, 0.0]),
        ("uniform", &uniform, [0.0, 1.0, 0.0, -1.2]),
        ("exponential", &exponential, [1.0, 1.0, 2.0, 6.0]),
    ];
    for (label, xs, truth) in cases {
        let c = estimate_cumulants(xs).unwrap();
        for k in 0..4 {
            let z = (c.values[k] - truth[k]) / c.std_errors[k];
            assert!(z.abs() <= 4.0, "{label} k{}: {} vs {} (se {})", k + 1, c.values[k], truth[k], c.std_errors[k]);
        }
    }
}

#[test]
fn two_sample_ks_holds_its_level_under_the_null() {
    let reps = 400;
    let rejections = (0..reps)
        .filter(|&r| two_sample_ks(&gaussian(500, 2 * r), &gaussian(500, 2 * r + 1)).unwrap().rejected_at(0.05))
        .count();
    let rate = rejections as f64 / reps as f64;
    let se = (0.05f64 * 0.95 / reps as f64).sqrt();
    // The asymptotic law is slightly conservative at finite sizes.
    assert!(rate <= 0.05 + 4.0 * se, "rejection rate {rate}");
}

fn joint_from(rows: Vec<Vec<f64>>, k: usize) -> JointOverlapMatrix {
    JointOverlapMatrix::new(k, 1, rows).unwrap()
}

#[test]
fn iid_gaussian_joint_statistics_are_near_identity() {
    let (k, trials) = (4, 20_000);
    let mut rng = rng_from_seed(5);
    let rows: Vec<Vec<f64>> = (0..trials).map(|_| (0..k).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let joint = joint_from(rows, k);
    let cov = joint_covariance(&joint).unwrap();
    assert!(cov.deviation_norm <= 4.0 * (k as f64 / trials as f64).sqrt(), "{}", cov.deviation_norm);
    assert!(!cov.rank_deficient);
    let proxy = multivariate_gaussian_distance(&joint, 50, 0).unwrap();
    assert!(proxy <= 0.03, "{proxy}");
}

#[test]
fn correlated_coordinates_are_detected() {
    let (k, trials) = (4, 20_000);
    let mut rng = rng_from_seed(6);
    let rows: Vec<Vec<f64>> = (0..trials)
        .map(|_| {
            let shared: f64 = rng.sample(StandardNormal);
            (0..k)
                .map(|_| {
                    let own: f64 = rng.sample(StandardNormal);
                    (0.5f64).sqrt() * (shared + own)
                })
                .collect()
        })
        .collect();
    let cov = joint_covariance(&joint_from(rows, k)).unwrap();
    // E[Z Z^T] - I = (J - I)/2 with top eigenvalue (K - 1)/2.
    assert!((cov.deviation_norm - 1.5).abs() < 0.1, "{}", cov.deviation_norm);
}

#[test]
fn single_coordinate_joint_reduces_to_second_moment() {
    let xs = gaussian(5_000, 9);
    let second = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
    let cov = joint_covariance(&joint_from(xs.iter().map(|&x| vec![x]).collect(), 1)).unwrap();
    assert!((cov.matrix[0][0] - second).abs() < 1e-12);
    assert!((cov.deviation_norm - (second - 1.0).abs()).abs() < 1e-12);
}
