use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::ordered_max;
use crate::rng;

/// Sign vectors are enumerated exhaustively up to this length.
pub const KHINTCHINE_ENUMERATION: usize = 20;
pub const TYPE_ENUMERATION: usize = 16;

const CHUNK: u64 = 4096;

/// Independent uniform signs; draw `k` always comes from stream `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RademacherSampler {
    pub seed: u64,
    pub dim: usize,
}

impl RademacherSampler {
    pub fn draw(&self, k: u64) -> Vec<f64> {
        let mut g = rng::stream(self.seed, k);
        (0..self.dim).map(|_| if g.random_bool(0.5) { 1.0 } else { -1.0 }).collect()
    }
}

/// An expectation estimate, exact when `stderr` is zero and `exact` is set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub ratio: f64,
    pub stderr: f64,
    pub samples: u64,
    pub exact: bool,
    pub seed: u64,
}

/// Sign pattern `s` of length `n`: bit `k` set means `-1`.
fn sign(s: u64, k: usize) -> f64 {
    if s >> k & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// Ordered sum of `h(s)` over all `2^n` sign patterns.
fn enumerate_mean(n: usize, h: impl Fn(u64) -> f64 + Sync) -> f64 {
    let total = 1u64 << n;
    let chunks = total.div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(total)).map(&h).sum())
        .collect();
    partial.iter().sum::<f64>() / total as f64
}

/// Mean and sample variance of `h` over `samples` draws, chunked by stream.
pub(crate) fn monte_carlo(samples: u64, seed: u64, h: impl Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync) -> (f64, f64) {
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut g = rng::stream(seed, c);
            let len = CHUNK.min(samples - c * CHUNK);
            (0..len).fold((0.0, 0.0), |(s, s2), _| {
                let v = h(&mut g);
                (s + v, s2 + v * v)
            })
        })
        .collect();
    let (s, s2) = partial.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples as f64;
    let mean = s / n;
    let var = if samples > 1 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    (mean, var)
}

/// `(E |sum_k eps_k a_k|^q)^{1/q} / ||a||_2`; exact for at most
/// [`KHINTCHINE_ENUMERATION`] coefficients, Monte Carlo otherwise.
pub fn khintchine_check(a: &[f64], q: f64, samples: u64, seed: u64) -> Result<MomentEstimate> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::OutOfRange(format!("moment exponent must be finite and > 0, got {q}")));
    }
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::OutOfRange("coefficients must be finite and not all zero".into()));
    }
    let moment = |s: f64| if s == 0.0 { 0.0 } else { s.abs().powf(q) };
    if a.len() <= KHINTCHINE_ENUMERATION {
        let m = enumerate_mean(a.len(), |s| moment(a.iter().enumerate().map(|(k, v)| sign(s, k) * v).sum()));
        return Ok(MomentEstimate {
            ratio: m.powf(1.0 / q) / norm,
            stderr: 0.0,
            samples: 1 << a.len(),
            exact: true,
            seed,
        });
    }
    if samples < 2 {
        return Err(Error::OutOfRange("Monte Carlo needs at least 2 samples".into()));
    }
    let (m, var) = monte_carlo(samples, rng::derive(seed, 0x4817), |g| {
        moment(a.iter().map(|v| if g.random_bool(0.5) { *v } else { -v }).sum())
    });
    let se = (var / samples as f64).sqrt();
    Ok(MomentEstimate {
        ratio: m.powf(1.0 / q) / norm,
        stderr: m.powf(1.0 / q - 1.0) / q * se / norm,
        samples,
        exact: false,
        seed,
    })
}

fn lr_norm(v: &[f64], r: f64) -> f64 {
    if r.is_infinite() {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else {
        v.iter().map(|x| x.abs().powf(r)).sum::<f64>().powf(1.0 / r)
    }
}

/// `(E ||sum_k eps_k F_k||_r^p)^{1/p} / (sum_k ||F_k||_r^p)^{1/p}` for vectors
/// in `l^r` (counting measure); exact for at most [`TYPE_ENUMERATION`] vectors.
pub fn rademacher_type_ratio(vectors: &[Vec<f64>], r: f64, p: f64, samples: u64, seed: u64) -> Result<MomentEstimate> {
    if !(r > 0.0) || !(p > 0.0 && p.is_finite()) {
        return Err(Error::OutOfRange(format!("need r > 0 and finite p > 0, got r = {r}, p = {p}")));
    }
    let dim = vectors.first().map_or(0, Vec::len);
    if vectors.is_empty() || vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::OutOfRange("vectors must be non-empty and share a dimension".into()));
    }
    let den: f64 = vectors.iter().map(|v| lr_norm(v, r).powf(p)).sum();
    if den == 0.0 {
        return Err(Error::OutOfRange("vectors must not all vanish".into()));
    }
    let value = |signs: &dyn Fn(usize) -> f64| {
        let mut s = vec![0.0; dim];
        for (k, v) in vectors.iter().enumerate() {
            let e = signs(k);
            s.iter_mut().zip(v).for_each(|(a, b)| *a += e * b);
        }
        lr_norm(&s, r).powf(p)
    };
    if vectors.len() <= TYPE_ENUMERATION {
        let m = enumerate_mean(vectors.len(), |s| value(&|k| sign(s, k)));
        return Ok(MomentEstimate {
            ratio: (m / den).powf(1.0 / p),
            stderr: 0.0,
            samples: 1 << vectors.len(),
            exact: true,
            seed,
        });
    }
    let (m, var) = monte_carlo(samples.max(2), rng::derive(seed, 0x7195), |g| {
        let e: Vec<f64> = (0..vectors.len()).map(|_| if g.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        value(&|k| e[k])
    });
    let se = (var / samples.max(2) as f64).sqrt();
    Ok(MomentEstimate {
        ratio: (m / den).powf(1.0 / p),
        stderr: (m / den).powf(1.0 / p - 1.0) / p * se / den,
        samples: samples.max(2),
        exact: false,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeEstimate {
    /// Largest ratio over the tuples tried; a lower bound on the type constant.
    pub constant: f64,
    pub stderr: f64,
    pub tuples: u64,
    pub exact: bool,
    pub witness: Vec<Vec<f64>>,
}

/// Empirical Rademacher-type-`p` constant of `l^r` in dimension `dim`, over
/// `tuples` Gaussian tuples of `n` vectors plus the tuple of basis vectors.
pub fn type_constant_estimate(dim: usize, r: f64, p: f64, n: usize, tuples: u64, samples: u64, seed: u64) -> Result<TypeEstimate> {
    if dim == 0 || n == 0 {
        return Err(Error::OutOfRange("dimension and tuple length must be >= 1".into()));
    }
    let basis: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut v = vec![0.0; dim];
            v[k % dim] = 1.0;
            v
        })
        .collect();
    let s = rng::derive(seed, 0x7E9E);
    let tuple = |k: u64| -> Vec<Vec<f64>> {
        if k == 0 {
            return basis.clone();
        }
        let mut g = rng::stream(s, k);
        (0..n)
            .map(|_| (0..dim).map(|_| g.sample::<f64, _>(rand_distr::StandardNormal)).collect())
            .collect()
    };
    let results: Vec<MomentEstimate> = (0..=tuples)
        .into_par_iter()
        .map(|k| rademacher_type_ratio(&tuple(k), r, p, samples, rng::derive(seed, k)))
        .collect::<Result<_>>()?;
    let (best, k) = results
        .iter()
        .enumerate()
        .map(|(k, e)| (e.ratio, k as u64))
        .fold((f64::NEG_INFINITY, u64::MAX), ordered_max);
    let e = &results[k as usize];
    Ok(TypeEstimate {
        constant: best,
        stderr: e.stderr,
        tuples: tuples + 1,
        exact: e.exact,
        witness: tuple(k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn khintchine_small_cases() {
        assert_eq!(khintchine_check(&[1.0, 0.0, 0.0], 0.7, 0, 0).unwrap().ratio, 1.0);
        let q1 = khintchine_check(&[1.0, 1.0], 1.0, 0, 0).unwrap();
        assert!(q1.exact);
        assert!((q1.ratio - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((khintchine_check(&[1.0, 1.0], 2.0, 0, 0).unwrap().ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn khintchine_fourth_moment() {
        // E (sum eps a)^4 = 3 (sum a^2)^2 - 2 sum a^4
        let a = [0.5, -1.0, 2.0, 0.25, 1.5];
        let s2: f64 = a.iter().map(|v| v * v).sum();
        let s4: f64 = a.iter().map(|v| v.powi(4)).sum();
        let want = (3.0 * s2 * s2 - 2.0 * s4).powf(0.25) / s2.sqrt();
        assert!((khintchine_check(&a, 4.0, 0, 0).unwrap().ratio - want).abs() < 1e-12);
    }

    #[test]
    fn khintchine_monte_carlo_band() {
        let a = vec![1.0; 30];
        let e = khintchine_check(&a, 2.0, 40_000, 5).unwrap();
        assert!(!e.exact);
        assert!((e.ratio - 1.0).abs() < 5.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn type_examples() {
        let e = rademacher_type_ratio(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1.0, 2.0, 0, 0).unwrap();
        assert!((e.ratio - 2f64.sqrt()).abs() < 1e-12);
        let t = type_constant_estimate(3, 2.0, 2.0, 5, 20, 0, 1).unwrap();
        assert!((t.constant - 1.0).abs() < 1e-12);
        let one = type_constant_estimate(1, 3.0, 2.0, 4, 20, 0, 1).unwrap();
        assert!(one.constant <= 1.0 + 1e-12);
    }

    #[test]
    fn sampler_frequencies() {
        let s = RademacherSampler { seed: 9, dim: 64 };
        let n = 200 * 64;
        let plus: usize = (0..200).map(|k| s.draw(k).iter().filter(|v| **v > 0.0).count()).sum();
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((plus as f64 - n as f64 / 2.0).abs() < 3.0 * sigma);
        assert_eq!(s.draw(7), s.draw(7));
    }
}
