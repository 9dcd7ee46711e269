//! Worst-case inputs for a single weighted constraint: maximise
//! `S(f) = int |T f|^p phi dmu / ||f||_r^p` over nonzero `f` on `Y`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::ascent::Ascent;
use crate::error::{ensure_len, Error, Result};
use crate::model::{lp_norm_raw, DiscreteFunction, OperatorMatrix};
use crate::oracle::ordered_max;
use crate::rng;

/// Relative residual at which power iteration counts as converged.
pub const EIGEN_RESIDUAL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeparationMethod {
    /// One-atom source space: every input is a multiple of the constant.
    Constant,
    /// Extreme points of the unit ball (`r <= 1` with `p >= 1`, or `r = inf`).
    Vertex,
    /// Power iteration on the `p = r = 2` quadratic form.
    EigenExact,
    /// Multi-start nonlinear power steps followed by projected ascent.
    Ascent,
    /// Ascent seeded by an exhaustive sign x grid scan.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleBudget {
    pub starts: usize,
    /// Objective evaluations per ascent start.
    pub evaluations: u64,
    /// Largest grid scanned when `dim Y <= 6`.
    pub grid_points: u64,
    pub power_iterations: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            starts: 6,
            evaluations: 3_000,
            grid_points: 50_000,
            power_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationResult {
    /// Best input found, normalised to unit `r`-norm.
    pub input: DiscreteFunction,
    /// `S(input)`, recomputed directly.
    pub achieved: f64,
    pub method: SeparationMethod,
    pub effort: u64,
    /// The search provably reached the supremum (up to convergence tolerance).
    pub exact: bool,
}

impl SeparationResult {
    pub fn violating_input(&self, threshold: f64) -> Option<&DiscreteFunction> {
        (self.achieved > threshold).then_some(&self.input)
    }
}

/// `int |T f|^p phi dmu / ||f||_r^p`.
pub fn separation_value(t: &OperatorMatrix, phi: &[f64], p: f64, r: f64, f: &[f64]) -> f64 {
    let norm = lp_norm_raw(f, r, t.source().weights(), None);
    if norm == 0.0 {
        return 0.0;
    }
    let mu = t.target().weights();
    let img = t.apply_raw(f);
    let s: f64 = img
        .iter()
        .enumerate()
        .map(|(x, u)| if *u == 0.0 { 0.0 } else { u.abs().powf(p) * phi[x] * mu[x] })
        .sum();
    s / norm.powf(p)
}

/// Maximises the weighted `L^p` norm of `T f` over the unit `L^r` ball of `Y`.
///
/// ```
/// use factorlab::disentangle::{separation_oracle, OracleBudget};
/// use factorlab::model::{AtomicMeasureSpace, DiscreteFunction, OperatorMatrix};
///
/// let t = OperatorMatrix::identity(AtomicMeasureSpace::new(vec![1.0, 1.0]).unwrap());
/// let phi = DiscreteFunction::new(vec![1.0, 2.0]);
/// let res = separation_oracle(&t, &phi, 2.0, 2.0, &OracleBudget::default(), 0).unwrap();
/// assert!((res.achieved - 2.0).abs() < 1e-12);
/// assert!(res.input.values()[0].abs() < 1e-6);
/// ```
pub fn separation_oracle(
    t: &OperatorMatrix,
    phi: &DiscreteFunction,
    p: f64,
    r: f64,
    budget: &OracleBudget,
    seed: u64,
) -> Result<SeparationResult> {
    ensure_len("separation weight", t.rows(), phi.len())?;
    if let Some((x, v)) = phi.values().iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidField {
            field: format!("phi[{x}]"),
            reason: format!("weights must be finite and >= 0, got {v}"),
        });
    }
    if !(p > 0.0 && p.is_finite()) || !(r > 0.0) {
        return Err(Error::OutOfRange(format!("need p in (0, inf) and r in (0, inf], got p = {p}, r = {r}")));
    }
    let w = phi.values();
    let m = t.cols();

    if m == 1 {
        return Ok(finish(t, w, p, r, vec![1.0], SeparationMethod::Constant, 1, true));
    }
    if r.is_infinite() {
        if t.is_positive() {
            // |T f| <= ||f||_inf T 1 entrywise.
            return Ok(finish(t, w, p, r, vec![1.0; m], SeparationMethod::Vertex, 1, true));
        }
        if p >= 1.0 && m <= 20 {
            let best = (0..1u64 << m)
                .into_par_iter()
                .map(|s| (separation_value(t, w, p, r, &signs(s, m)), s))
                .reduce(|| (f64::NEG_INFINITY, u64::MAX), ordered_max);
            return Ok(finish(t, w, p, r, signs(best.1, m), SeparationMethod::Vertex, 1 << m, true));
        }
        return Err(Error::OutOfRange("r = inf needs a positive operator or dim Y <= 20".into()));
    }
    if r <= 1.0 && p >= 1.0 {
        // A convex functional peaks at an extreme point of the hull of the
        // unit ball, which is spanned by the scaled indicators.
        let best = (0..m)
            .map(|y| (separation_value(t, w, p, r, &basis(m, y)), y as u64))
            .fold((f64::NEG_INFINITY, u64::MAX), ordered_max);
        return Ok(finish(t, w, p, r, basis(m, best.1 as usize), SeparationMethod::Vertex, m as u64, true));
    }
    if p == 2.0 && r == 2.0 {
        let (f, iters, converged) = power_iteration(t, w, budget.power_iterations, seed);
        if converged {
            return Ok(finish(t, w, p, r, f, SeparationMethod::EigenExact, iters, true));
        }
        // Slow convergence: fall through to ascent, keeping the eigen iterate as a start.
        let res = search(t, w, p, r, budget, seed, Some(f));
        return Ok(SeparationResult {
            effort: res.effort + iters,
            ..res
        });
    }
    Ok(search(t, w, p, r, budget, seed, None))
}

fn signs(s: u64, m: usize) -> Vec<f64> {
    (0..m).map(|y| if s >> y & 1 == 1 { -1.0 } else { 1.0 }).collect()
}

fn basis(m: usize, y: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[y] = 1.0;
    v
}

#[allow(clippy::too_many_arguments)]
fn finish(
    t: &OperatorMatrix,
    w: &[f64],
    p: f64,
    r: f64,
    mut f: Vec<f64>,
    method: SeparationMethod,
    effort: u64,
    exact: bool,
) -> SeparationResult {
    let n = lp_norm_raw(&f, r, t.source().weights(), None);
    if n > 0.0 {
        f.iter_mut().for_each(|v| *v /= n);
    }
    let achieved = separation_value(t, w, p, r, &f);
    SeparationResult {
        input: DiscreteFunction::new(f),
        achieved,
        method,
        effort,
        exact,
    }
}

/// Power iteration on `D^{-1/2} T^t W T D^{-1/2}`, `W = diag(phi mu_X)`,
/// `D = diag(mu_Y)`, applied matrix-free.
fn power_iteration(t: &OperatorMatrix, w: &[f64], max_iter: usize, seed: u64) -> (Vec<f64>, u64, bool) {
    let muy = t.source().weights();
    let mux = t.target().weights();
    let sq: Vec<f64> = muy.iter().map(|m| m.sqrt()).collect();
    let apply = |v: &[f64]| -> Vec<f64> {
        let f: Vec<f64> = v.iter().zip(&sq).map(|(a, s)| a / s).collect();
        let u = t.apply_raw(&f);
        let z: Vec<f64> = u.iter().enumerate().map(|(x, u)| u * w[x] * mux[x]).collect();
        t.apply_transpose_raw(&z).iter().zip(&sq).map(|(a, s)| a / s).collect()
    };
    let mut g = rng::stream(seed, 0xE16);
    let mut v: Vec<f64> = sq.iter().map(|s| s + 0.1 * g.random::<f64>()).collect();
    normalise2(&mut v);
    let mut iters = 0u64;
    let mut converged = false;
    for _ in 0..max_iter {
        let bv = apply(&v);
        iters += 1;
        let lambda: f64 = bv.iter().zip(&v).map(|(a, b)| a * b).sum();
        if lambda <= 0.0 {
            converged = bv.iter().all(|&x| x == 0.0);
            break;
        }
        let res = bv.iter().zip(&v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        if res <= EIGEN_RESIDUAL * lambda {
            converged = true;
            break;
        }
        v = bv;
        normalise2(&mut v);
    }
    let f = v.iter().zip(&sq).map(|(a, s)| a / s).collect();
    (f, iters, converged)
}

fn normalise2(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn log_value(t: &OperatorMatrix, w: &[f64], p: f64, r: f64, f: &[f64]) -> f64 {
    let s = separation_value(t, w, p, r, f);
    if s > 0.0 {
        s.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn log_gradient(t: &OperatorMatrix, w: &[f64], p: f64, r: f64, f: &[f64]) -> Vec<f64> {
    let mux = t.target().weights();
    let muy = t.source().weights();
    let u = t.apply_raw(f);
    let weights: Vec<f64> = u
        .iter()
        .enumerate()
        .map(|(x, u)| if *u == 0.0 { 0.0 } else { u.abs().powf(p) * w[x] * mux[x] })
        .collect();
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return vec![0.0; f.len()];
    }
    let z: Vec<f64> = u
        .iter()
        .zip(&weights)
        .map(|(u, q)| if *u == 0.0 { 0.0 } else { p * q / (u * total) })
        .collect();
    let mut g = t.apply_transpose_raw(&z);
    let nr = lp_norm_raw(f, r, muy, None).powf(r);
    for (y, gy) in g.iter_mut().enumerate() {
        if f[y] != 0.0 {
            *gy -= p * f[y].abs().powf(r - 1.0) * f[y].signum() * muy[y] / nr;
        }
    }
    g
}

/// Nonlinear power steps `f <- psi(T^t (w |Tf|^{p-1} sgn Tf) / mu_Y)` with
/// `psi(s) = sgn(s) |s|^{1/(r-1)}`, keeping the best iterate.
fn boyd(t: &OperatorMatrix, w: &[f64], p: f64, r: f64, mut f: Vec<f64>, iters: usize) -> (Vec<f64>, u64) {
    let mux = t.target().weights();
    let muy = t.source().weights();
    let mut best_v = separation_value(t, w, p, r, &f);
    let mut best = f.clone();
    let mut used = 1;
    for _ in 0..iters {
        let u = t.apply_raw(&f);
        let z: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(x, u)| if *u == 0.0 { 0.0 } else { w[x] * mux[x] * u.abs().powf(p - 1.0) * u.signum() })
            .collect();
        let q = t.apply_transpose_raw(&z);
        let next: Vec<f64> = q
            .iter()
            .zip(muy)
            .map(|(q, m)| q.signum() * (q.abs() / m).powf(1.0 / (r - 1.0)))
            .collect();
        let n = lp_norm_raw(&next, r, muy, None);
        if !(n > 0.0 && n.is_finite()) {
            break;
        }
        f = next.iter().map(|v| v / n).collect();
        let v = separation_value(t, w, p, r, &f);
        used += 1;
        if v > best_v * (1.0 + 1e-14) {
            best_v = v;
            best = f.clone();
        } else if v <= best_v {
            break;
        }
    }
    (best, used)
}

fn grid_scan(t: &OperatorMatrix, w: &[f64], p: f64, r: f64, max_points: u64) -> Option<(Vec<f64>, u64)> {
    let m = t.cols() as u32;
    let signed = !t.is_positive();
    let count = |l: u64| if signed { 2 * l + 1 } else { l + 1 };
    let mut levels = 0;
    while count(levels + 1).checked_pow(m).is_some_and(|c| c <= max_points) {
        levels += 1;
    }
    if levels == 0 {
        return None;
    }
    let base = count(levels);
    let total = base.pow(m);
    let lo = if signed { -(levels as i64) } else { 0 };
    let point = |mut k: u64| -> Vec<f64> {
        (0..m)
            .map(|_| {
                let d = (k % base) as i64;
                k /= base;
                (lo + d) as f64 / levels as f64
            })
            .collect()
    };
    let best = (0..total)
        .into_par_iter()
        .map(|k| (separation_value(t, w, p, r, &point(k)), k))
        .reduce(|| (f64::NEG_INFINITY, u64::MAX), ordered_max);
    Some((point(best.1), total))
}

fn search(
    t: &OperatorMatrix,
    w: &[f64],
    p: f64,
    r: f64,
    budget: &OracleBudget,
    seed: u64,
    extra: Option<Vec<f64>>,
) -> SeparationResult {
    let m = t.cols();
    let positive = t.is_positive();
    let mut effort = 0;
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(f) = extra {
        starts.push(f);
    }
    let mut method = SeparationMethod::Ascent;
    if m <= 6 {
        if let Some((f, used)) = grid_scan(t, w, p, r, budget.grid_points) {
            starts.push(f);
            effort += used;
            method = SeparationMethod::Exhaustive;
        }
    }
    starts.push(vec![1.0; m]);
    let fixed = starts.len();
    let total = fixed + budget.starts;
    let normalise = |x: &mut [Vec<f64>]| {
        let n = lp_norm_raw(&x[0], r, t.source().weights(), None);
        if n > 0.0 {
            x[0].iter_mut().for_each(|v| *v /= n);
        }
    };
    let value = |x: &[Vec<f64>]| log_value(t, w, p, r, &x[0]);
    let gradient = |x: &[Vec<f64>]| vec![log_gradient(t, w, p, r, &x[0])];
    let nonneg = [positive];
    let ascent = Ascent {
        value: &value,
        gradient: &gradient,
        normalise: &normalise,
        nonnegative: &nonneg,
    };
    let runs: Vec<(Vec<f64>, f64, u64)> = (0..total)
        .into_par_iter()
        .map(|k| {
            let start = if k < fixed {
                starts[k].clone()
            } else {
                let mut g = rng::stream(seed, k as u64);
                (0..m)
                    .map(|_| {
                        if positive {
                            g.random::<f64>()
                        } else {
                            g.sample::<f64, _>(StandardNormal)
                        }
                    })
                    .collect()
            };
            let (start, mut used) = if r > 1.0 { boyd(t, w, p, r, start, 500) } else { (start, 0) };
            let (x, v, u2) = ascent.run(vec![start], budget.evaluations);
            used += u2;
            (x.into_iter().next().unwrap_or_default(), v, used)
        })
        .collect();
    effort += runs.iter().map(|r| r.2).sum::<u64>();
    let best = runs
        .iter()
        .enumerate()
        .map(|(k, r)| (r.1, k as u64))
        .fold((f64::NEG_INFINITY, u64::MAX), ordered_max);
    let f = runs[best.1 as usize].0.clone();
    // Global by structure: positive T with p <= r and r >= 1 (nonlinear power
    // method for p >= 1, concave maximisation for p < 1).
    let exact = positive && p <= r && r >= 1.0;
    finish(t, w, p, r, f, method, effort, exact)
}
