use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use super::rademacher::{monte_carlo, MomentEstimate};
use crate::error::{Error, Result};
use crate::rng;

const CHUNK: usize = 4096;

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 2.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("stability index must lie in (0, 2], got {p}")))
    }
}

/// One symmetric p-stable draw with characteristic function `exp(-|t|^p)`
/// (Chambers-Mallows-Stuck).
pub fn stable_draw(p: f64, g: &mut impl Rng) -> f64 {
    if p == 2.0 {
        return std::f64::consts::SQRT_2 * g.sample::<f64, _>(StandardNormal);
    }
    let u = PI * (g.random::<f64>() - 0.5);
    if p == 1.0 {
        return u.tan();
    }
    let w: f64 = g.sample(Exp1);
    (p * u).sin() / u.cos().powf(1.0 / p) * (((1.0 - p) * u).cos() / w).powf((1.0 - p) / p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StableSampler {
    pub p: f64,
    pub seed: u64,
}

impl StableSampler {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        check_p(p)?;
        Ok(Self { p, seed })
    }

    /// The first `n` draws; blocks of 4096 come from consecutive streams, so
    /// a longer request extends a shorter one.
    pub fn sample(&self, n: usize) -> Vec<f64> {
        let chunks = n.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut g = rng::stream(self.seed, c as u64);
                let len = CHUNK.min(n - c * CHUNK);
                (0..len).map(move |_| stable_draw(self.p, &mut g)).collect::<Vec<_>>()
            })
            .collect()
    }
}

pub fn stable_sample(p: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(StableSampler::new(p, seed)?.sample(n))
}

/// `E |gamma|^q` for a normalised symmetric p-stable `gamma`, `0 < q < p`:
/// `2^q Gamma((1+q)/2) Gamma(1-q/p) / (sqrt(pi) Gamma(1-q/2))`.
/// For `p = 2` this is the moment of a Gaussian of variance 2.
pub fn stable_moment(p: f64, q: f64) -> Result<f64> {
    check_p(p)?;
    if !(q > 0.0 && q < p) {
        return Err(Error::OutOfRange(format!("moment order must satisfy 0 < q < p, got q = {q}, p = {p}")));
    }
    Ok(2f64.powf(q) * gamma((1.0 + q) / 2.0) * gamma(1.0 - q / p) / (PI.sqrt() * gamma(1.0 - q / 2.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StableEquivalence {
    /// `(E |sum_k gamma_k a_k|^q)^{1/q} / ||a||_p`.
    pub estimate: MomentEstimate,
    /// `(E |gamma|^q)^{1/q}`, the value predicted for every `a`.
    pub expected: f64,
}

/// Monte Carlo check that `(E |sum_k gamma_k a_k|^q)^{1/q} / ||a||_p` does not
/// depend on `a`. The standard error comes from the sample variance of
/// `|S|^q`, which is only finite when `2q < p`; otherwise it is a heuristic.
pub fn stable_equivalence_check(p: f64, q: f64, a: &[f64], samples: u64, seed: u64) -> Result<StableEquivalence> {
    let expected = stable_moment(p, q)?.powf(1.0 / q);
    let norm = a.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::OutOfRange("coefficients must be finite and not all zero".into()));
    }
    if samples < 2 {
        return Err(Error::OutOfRange("Monte Carlo needs at least 2 samples".into()));
    }
    let (m, var) = monte_carlo(samples, rng::derive(seed, 0x57AB), |g| {
        let s: f64 = a.iter().map(|v| v * stable_draw(p, g)).sum();
        if s == 0.0 {
            0.0
        } else {
            (s.abs() / norm).powf(q)
        }
    });
    let se = (var / samples as f64).sqrt();
    Ok(StableEquivalence {
        estimate: MomentEstimate {
            ratio: m.powf(1.0 / q),
            stderr: m.powf(1.0 / q - 1.0) / q * se,
            samples,
            exact: false,
            seed,
        },
        expected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub variance: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Sample variance with the standard error `sqrt((m4 - s^4) / n)`.
pub fn sample_variance(xs: &[f64]) -> VarianceEstimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    VarianceEstimate {
        variance: m2 * n / (n - 1.0),
        stderr: ((m4 - m2 * m2) / n).max(0.0).sqrt(),
        samples: xs.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JensenReport {
    pub theta: f64,
    /// `E(X)^theta - E(X^theta)` over the empirical distribution.
    pub gap: f64,
    pub samples: usize,
    pub passed: bool,
}

/// `E(X^theta) <= E(X)^theta` for `X = |gamma|^q` with `gamma` p-stable.
pub fn jensen_check(p: f64, q: f64, theta: f64, samples: usize, seed: u64) -> Result<JensenReport> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::OutOfRange(format!("theta must lie in (0, 1), got {theta}")));
    }
    stable_moment(p, q)?;
    let xs: Vec<f64> = stable_sample(p, samples, seed)?.iter().map(|g| g.abs().powf(q)).collect();
    let n = samples as f64;
    let lhs = xs.iter().map(|x| x.powf(theta)).sum::<f64>() / n;
    let rhs = (xs.iter().sum::<f64>() / n).powf(theta);
    Ok(JensenReport {
        theta,
        gap: rhs - lhs,
        samples,
        passed: lhs <= rhs * (1.0 + 1e-12),
    })
}

/// `Re E exp(i t gamma)` estimated from `xs` with its standard error.
pub fn empirical_characteristic(xs: &[f64], t: f64) -> (f64, f64) {
    let n = xs.len() as f64;
    let c: Vec<f64> = xs.iter().map(|x| (t * x).cos()).collect();
    let mean = c.iter().sum::<f64>() / n;
    let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
