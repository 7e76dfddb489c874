use fsbench_core::stats::{mean_confidence_interval, t_cdf, t_quantile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Unnormalized Student-t density; the constant cancels in the oracle below.
fn kernel(df: f64, x: f64) -> f64 {
    (1.0 + x * x / df).powf(-0.5 * (df + 1.0))
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Simpson's rule with step halving until two estimates agree to `tol`.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut n = 64;
    let mut prev = simpson(f, a, b, n);
    loop {
        n *= 2;
        let next = simpson(f, a, b, n);
        if (next - prev).abs() < tol || n > 1 << 22 {
            return next;
        }
        prev = next;
    }
}

/// CDF by quadrature: `0.5 + ∫0^t k / (2 ∫0^L k)` with a tail cut at `L`.
fn oracle_cdf(df: f64, t: f64) -> f64 {
    let f = |x: f64| kernel(df, x);
    let half_mass = integrate(&f, 0.0, 60.0, 1e-14) + integrate(&f, 60.0, 2000.0, 1e-14);
    0.5 + integrate(&f, 0.0, t, 1e-14) / (2.0 * half_mass)
}

fn oracle_quantile(df: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0);
    while hi - lo > 1e-11 {
        let mid = 0.5 * (lo + hi);
        if oracle_cdf(df, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn t_quantile_df99_matches_quadrature_oracle() {
    let oracle = oracle_quantile(99.0, 0.975);
    let got = t_quantile(99, 0.975).unwrap();
    assert!((got - oracle).abs() < 1e-6, "got {got}, oracle {oracle}");
    assert!((got - 1.984_216_951_508_682_7).abs() < 1e-9);
}

#[test]
fn t_cdf_matches_quadrature_at_several_points() {
    for df in [3u64, 10, 99] {
        for t in [0.1, 0.7, 1.5, 2.5, 4.0] {
            let oracle = oracle_cdf(df as f64, t);
            assert!(
                (t_cdf(df, t).unwrap() - oracle).abs() < 1e-9,
                "df {df} t {t}"
            );
        }
    }
}

#[test]
fn cauchy_quartile_is_exactly_one() {
    assert!((t_quantile(1, 0.75).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn quantile_symmetry_and_monotonicity() {
    for df in [1u64, 2, 5, 30, 99, 1000] {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let q = t_quantile(df, p).unwrap();
            assert!(q > prev || (p == 0.5 && q == 0.0));
            assert!((q + t_quantile(df, 1.0 - p).unwrap()).abs() < 1e-9);
            prev = q;
        }
    }
    let mut prev = f64::INFINITY;
    for df in 1..200u64 {
        let q = t_quantile(df, 0.975).unwrap();
        assert!(q < prev);
        prev = q;
    }
}

fn fixture() -> Vec<f64> {
    include_str!("fixtures/episode_accuracies.txt")
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect()
}

#[test]
fn hundred_accuracies_match_spreadsheet_formulas() {
    let values = fixture();
    assert_eq!(values.len(), 100);
    let n = values.len() as f64;
    // AVERAGE, STDEV.S via the textbook sum-of-squares form, T.INV.2T(0.05, 99)
    let sum: f64 = values.iter().sum();
    let sum_sq: f64 = values.iter().map(|v| v * v).sum();
    let mean = sum / n;
    let sd = ((n * sum_sq - sum * sum) / (n * (n - 1.0))).sqrt();
    let t = 1.984_216_951_508_682_7;
    let h = t * sd / n.sqrt();

    let ci = mean_confidence_interval(&values, 0.95).unwrap();
    assert!((ci.mean - mean).abs() < 1e-9);
    assert!((ci.std_dev - sd).abs() < 1e-9);
    assert!((ci.half_width - h).abs() < 1e-9);
    // frozen from an independent statistics package
    assert!((ci.mean - 0.6088).abs() < 1e-9);
    assert!((ci.std_dev - 0.066_199_575_817_250_06).abs() < 1e-9);
    assert!((ci.half_width - 0.013_135_432_051_927_182).abs() < 1e-9);
    assert_eq!(ci.n, 100);
}

#[test]
fn half_width_scales_with_inverse_sqrt_n() {
    let values = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut scaled = Vec::new();
    for n in [25usize, 100, 400] {
        let draws = 10_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let sample: Vec<f64> = (0..n)
                .map(|_| values[rng.random_range(0..values.len())])
                .collect();
            let ci = mean_confidence_interval(&sample, 0.95).unwrap();
            let t = t_quantile(n as u64 - 1, 0.975).unwrap();
            total += ci.half_width / t * (n as f64).sqrt();
        }
        scaled.push(total / draws as f64);
    }
    for s in &scaled[1..] {
        let ratio = s / scaled[0];
        assert!((ratio - 1.0).abs() < 0.2, "{scaled:?}");
    }
}

#[test]
fn fewer_than_two_values_is_an_error() {
    assert!(mean_confidence_interval(&[], 0.95).is_err());
    assert!(mean_confidence_interval(&[0.5], 0.95).is_err());
}
