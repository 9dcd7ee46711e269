use statrs::distribution::{Cauchy, ContinuousCDF, Normal};

use factorlab::vector::{empirical_characteristic, stable_sample, StableSampler};

/// Kolmogorov-Smirnov distance between the sample and `cdf`.
fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

// 0.1% critical value of the one-sample statistic
fn critical(n: usize) -> f64 {
    1.95 / (n as f64).sqrt()
}

#[test]
fn p_one_is_standard_cauchy() {
    let n = 50_000;
    let cauchy = Cauchy::new(0.0, 1.0).unwrap();
    for seed in [1, 2, 3] {
        let d = ks(stable_sample(1.0, n, seed).unwrap(), |x| cauchy.cdf(x));
        assert!(d < critical(n), "seed {seed}: KS distance {d}");
    }
}

#[test]
fn p_two_is_gaussian_of_variance_two() {
    let n = 50_000;
    let normal = Normal::new(0.0, 2f64.sqrt()).unwrap();
    let d = ks(stable_sample(2.0, n, 11).unwrap(), |x| normal.cdf(x));
    assert!(d < critical(n), "KS distance {d}");
}

#[test]
fn characteristic_function_matches() {
    for p in [0.5, 0.8, 1.0, 1.3, 1.7, 2.0] {
        let xs = stable_sample(p, 100_000, 5).unwrap();
        for t in [0.3, 1.0, 2.0] {
            let (est, se) = empirical_characteristic(&xs, t);
            let expected = (-f64::powf(t, p)).exp();
            assert!((est - expected).abs() <= 5.0 * se.max(1e-4), "p = {p}, t = {t}: {est} vs {expected}");
        }
    }
}

#[test]
fn two_samples_share_a_law() {
    // two-sample KS between independent seeds
    let n = 20_000;
    for p in [0.7, 1.5] {
        let mut a = stable_sample(p, n, 100).unwrap();
        let b = stable_sample(p, n, 200).unwrap();
        a.sort_by(f64::total_cmp);
        let d = ks(b, |x| a.partition_point(|v| *v <= x) as f64 / n as f64);
        assert!(d < 1.95 * (2.0 / n as f64).sqrt(), "p = {p}: two-sample distance {d}");
    }
}

#[test]
fn longer_requests_extend_shorter_ones() {
    let s = StableSampler::new(1.2, 9).unwrap();
    let short = s.sample(5000);
    let long = s.sample(12_000);
    assert_eq!(short[..], long[..5000]);
    assert!(StableSampler::new(2.5, 0).is_err());
    assert!(StableSampler::new(0.0, 0).is_err());
}
