use rayon::prelude::*;
use serde::Serialize;

use super::family::ConstraintFamily;
use super::feasibility::{solve_scaled, FeasibilityOptions, FeasibilityStatus, FEASIBILITY_TOL};
use super::separation::{separation_oracle, separation_value, OracleBudget, SeparationMethod};
use crate::error::{ensure_len, Error, Result};
use crate::model::{geometric_means, Certificate, DiscreteFunction, Instance};
use crate::oracle::{estimate_best_constant, ordered_max, sample_inputs};
use crate::rng;

/// Relative tolerance before a separation value counts as a violation.
pub const SEPARATION_TOL: f64 = 1e-6;

/// Default cap for positive instances.
pub const POSITIVE_CAP: f64 = 1.0 + 1e-4;

/// Largest cap tried by the doubling policy.
pub const CAP_LIMIT: f64 = 1024.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CapPolicy {
    Fixed { cap: f64 },
    /// `start, 2 start, 4 start, ...` while at most `limit`.
    Doubling { start: f64, limit: f64 },
}

impl CapPolicy {
    pub fn caps(&self) -> Vec<f64> {
        match *self {
            CapPolicy::Fixed { cap } => vec![cap],
            CapPolicy::Doubling { start, limit } => {
                let mut caps = vec![];
                let mut c = start;
                while c <= limit {
                    caps.push(c);
                    c *= 2.0;
                }
                caps
            }
        }
    }

    /// Cap reported when every attempt fails.
    fn exhausted(&self) -> f64 {
        match *self {
            CapPolicy::Fixed { cap } => cap,
            CapPolicy::Doubling { .. } => self.caps().last().map_or(1.0, |c| c * 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Constant `A`; defaults to the instance's known constant, then to an estimate.
    pub constant: Option<f64>,
    /// Defaults to a fixed cap of `1 + 1e-4` for positive instances and to
    /// doubling from 1 up to 2^10 otherwise.
    pub cap: Option<CapPolicy>,
    /// Skip the exponent admissibility check and use the doubling policy.
    pub probe: bool,
    pub max_rounds: usize,
    pub random_generators: usize,
    pub estimate_budget: u64,
    pub feasibility: FeasibilityOptions,
    pub oracle: OracleBudget,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            constant: None,
            cap: None,
            probe: false,
            max_rounds: 200,
            random_generators: 2,
            estimate_budget: 40_000,
            feasibility: FeasibilityOptions::default(),
            oracle: OracleBudget::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveOutcome {
    Certified,
    InfeasibleEvidence,
    BudgetExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantSource {
    Supplied,
    Known,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttemptStatus {
    Certified,
    Infeasible,
    Undecided,
    RoundsExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapAttempt {
    pub cap: f64,
    pub status: AttemptStatus,
    pub rounds: usize,
    pub t_lo: f64,
    pub t_hi: f64,
    pub constraints: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRecord {
    pub method: SeparationMethod,
    pub exact: bool,
    pub effort: u64,
    /// Best separation value relative to `A^{p_j} cap`.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub outcome: SolveOutcome,
    pub certificate: Option<Certificate>,
    pub constant: f64,
    pub constant_source: ConstantSource,
    pub cap: f64,
    pub iterations: usize,
    pub constraint_counts: Vec<usize>,
    /// `1 - min_x prod_j phi_j^{theta_j}` of the returned certificate.
    pub geometric_residual: Option<f64>,
    pub oracle: Vec<OracleRecord>,
    pub attempts: Vec<CapAttempt>,
    /// Every oracle call in the final round was exact.
    pub exact: bool,
}

/// Refuses exponent profiles outside the range where certificates exist.
pub fn check_admissible(inst: &Instance) -> Result<()> {
    let (p, r) = (inst.profile().p(), inst.profile().r());
    let positive = inst.all_positive();
    for j in 0..inst.d() {
        let (pj, rj) = (p[j], r[j]);
        let condition = if positive {
            (pj > rj).then(|| format!("positive operators need p_j <= r_j, got p_{j} = {pj} > r_{j} = {rj}"))
        } else if rj.is_infinite() {
            Some(format!("r_{j} = inf is only admissible when every operator is positive"))
        } else if rj < 2.0 {
            (pj >= rj).then(|| format!("general operators need p_j < r_j when r_j < 2, got p_{j} = {pj}, r_{j} = {rj}"))
        } else {
            (pj > 2.0).then(|| format!("general operators need p_j <= 2 when 2 <= r_j < inf, got p_{j} = {pj}, r_{j} = {rj}"))
        };
        if let Some(condition) = condition {
            return Err(Error::Inadmissible { index: j, condition });
        }
    }
    Ok(())
}

pub fn check_saturating(inst: &Instance) -> Result<()> {
    for (j, t) in inst.operators().iter().enumerate() {
        if let Some(row) = t.saturation_check().zero_row {
            return Err(Error::NotSaturating { index: j, row });
        }
    }
    Ok(())
}

/// Resolves the constant `A` used by [`disentangle`].
pub fn resolve_constant(inst: &Instance, options: &SolveOptions) -> Result<(f64, ConstantSource)> {
    if let Some(a) = options.constant {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::OutOfRange(format!("constant must be finite and > 0, got {a}")));
        }
        return Ok((a, ConstantSource::Supplied));
    }
    if let Some(a) = inst.known_constant() {
        return Ok((a, ConstantSource::Known));
    }
    let est = estimate_best_constant(inst, options.estimate_budget, rng::derive(options.seed, 1))?;
    Ok((est.constant(inst), ConstantSource::Estimated))
}

/// Cutting-plane search for weights `phi_j` with `prod_j phi_j^{theta_j} >= 1`
/// and `int |T_j f|^{p_j} phi_j dmu <= A^{p_j} cap ||f||_{r_j}^{p_j}`.
pub fn disentangle(inst: &Instance, options: &SolveOptions) -> Result<SolveReport> {
    check_saturating(inst)?;
    if !options.probe {
        check_admissible(inst)?;
    }
    let (a, constant_source) = resolve_constant(inst, options)?;
    let policy = options.cap.unwrap_or(if options.probe || !inst.all_positive() {
        CapPolicy::Doubling {
            start: 1.0,
            limit: CAP_LIMIT,
        }
    } else {
        CapPolicy::Fixed { cap: POSITIVE_CAP }
    });
    if let Some(&c) = policy.caps().iter().find(|c| !(**c >= 1.0 && c.is_finite())) {
        return Err(Error::OutOfRange(format!("cap must be finite and >= 1, got {c}")));
    }
    let d = inst.d();
    let (p, r, theta) = (inst.profile().p(), inst.profile().r(), inst.profile().theta());
    let mu = inst.space_x().weights();
    let mut fam = ConstraintFamily::seeded(inst, options.random_generators, options.seed);
    let mut warm: Option<Vec<Vec<f64>>> = None;
    let mut attempts = Vec::new();
    let mut iterations = 0;
    let mut last_oracle = Vec::new();

    for cap in policy.caps() {
        let c: Vec<f64> = p.iter().map(|pj| a.powf(*pj) * cap).collect();
        let mut rounds = 0;
        let mut accepted = None;
        let status = loop {
            if rounds >= options.max_rounds {
                break (AttemptStatus::RoundsExhausted, None);
            }
            let res = solve_scaled(mu, theta, &fam, &c, warm.take(), &options.feasibility);
            rounds += 1;
            iterations += 1;
            warm = Some(res.lambda.clone());
            match res.status {
                FeasibilityStatus::Infeasible => break (AttemptStatus::Infeasible, Some(res)),
                FeasibilityStatus::Undecided => break (AttemptStatus::Undecided, Some(res)),
                FeasibilityStatus::Feasible => {}
            }
            let phi = if unit_feasible(&fam, mu, &c) {
                vec![DiscreteFunction::constant(mu.len(), 1.0); d]
            } else {
                res.phi()
            };
            let round_seed = rng::derive(options.seed, 0x5E9 + iterations as u64);
            let seps: Vec<_> = (0..d)
                .into_par_iter()
                .map(|j| separation_oracle(&inst.operators()[j], &phi[j], p[j], r[j], &options.oracle, rng::derive(round_seed, j as u64)))
                .collect::<Result<_>>()?;
            last_oracle = seps
                .iter()
                .zip(&c)
                .map(|(s, cj)| OracleRecord {
                    method: s.method,
                    exact: s.exact,
                    effort: s.effort,
                    relative: s.achieved / cj,
                })
                .collect();
            let mut added = false;
            for (j, s) in seps.into_iter().enumerate() {
                if let Some(f) = s.violating_input(c[j] * (1.0 + SEPARATION_TOL)) {
                    if fam.add(inst, j, f.clone())? {
                        added = true;
                        if let Some(w) = warm.as_mut() {
                            let k = w[j].len() as f64 + 1.0;
                            w[j].iter_mut().for_each(|l| *l *= (k - 1.0) / k);
                            w[j].push(1.0 / k);
                        }
                    }
                }
            }
            if !added {
                accepted = Some(phi);
                break (AttemptStatus::Certified, Some(res));
            }
        };
        let (st, res) = status;
        attempts.push(CapAttempt {
            cap,
            status: st,
            rounds,
            t_lo: res.as_ref().map_or(f64::NAN, |r| r.t_lo),
            t_hi: res.as_ref().map_or(f64::NAN, |r| r.t_hi),
            constraints: fam.counts(),
        });
        if st == AttemptStatus::Certified {
            let res = res.expect("certified attempts carry a solution");
            let phi = accepted.expect("certified attempts carry weights");
            let floor = geometric_means(&phi, theta).into_iter().fold(f64::INFINITY, f64::min);
            let mut cert = Certificate::new(phi, a);
            cert.slacks.insert("cap".into(), cap);
            cert.slacks.insert("geometric_floor".into(), floor);
            cert.slacks.insert("inner_violation".into(), res.max_violation);
            for (j, o) in last_oracle.iter().enumerate() {
                cert.slacks.insert(format!("bound[{j}]"), a * cap.powf(1.0 / p[j]));
                cert.slacks.insert(format!("separation[{j}]"), o.relative);
            }
            return Ok(SolveReport {
                outcome: SolveOutcome::Certified,
                certificate: Some(cert),
                constant: a,
                constant_source,
                cap,
                iterations,
                constraint_counts: fam.counts(),
                geometric_residual: Some(1.0 - floor),
                exact: last_oracle.iter().all(|o| o.exact),
                oracle: last_oracle,
                attempts,
            });
        }
    }
    let outcome = match (policy, attempts.last().map(|a| a.status)) {
        (CapPolicy::Fixed { .. }, Some(AttemptStatus::Infeasible)) => SolveOutcome::InfeasibleEvidence,
        _ => SolveOutcome::BudgetExhausted,
    };
    Ok(SolveReport {
        outcome,
        certificate: None,
        constant: a,
        constant_source,
        cap: policy.exhausted(),
        iterations,
        constraint_counts: fam.counts(),
        geometric_residual: None,
        exact: false,
        oracle: last_oracle,
        attempts,
    })
}

/// Unit weights satisfy every constraint collected so far.
fn unit_feasible(fam: &ConstraintFamily, mu: &[f64], c: &[f64]) -> bool {
    let ones = vec![1.0; mu.len()];
    (0..fam.d()).all(|j| fam.members(j).iter().all(|m| m.integrate(&ones, mu) <= c[j]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub trials: u64,
    pub oracle: OracleBudget,
    pub seed: u64,
    pub geometric_tol: f64,
    pub separation_tol: f64,
    pub chain_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            trials: 1_000,
            oracle: OracleBudget::default(),
            seed: 0,
            geometric_tol: FEASIBILITY_TOL,
            separation_tol: SEPARATION_TOL,
            chain_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationCheck {
    pub bound: f64,
    pub achieved: f64,
    /// `achieved / bound^{p_j}`.
    pub relative: f64,
    pub method: SeparationMethod,
    pub exact: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainCheck {
    pub trials: u64,
    /// Largest `lhs / (prod_j bound_j^{gamma_j} ||f_j||^{gamma_j})`.
    pub worst_ratio: f64,
    pub violations: u64,
    pub worst_input: Option<Vec<DiscreteFunction>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub geometric_floor: f64,
    pub worst_atom: usize,
    pub geometric_residual: f64,
    pub separation: Vec<SeparationCheck>,
    pub chain: ChainCheck,
}

/// Checks a certificate: geometric means, per-index separation against
/// `bound_j`, and the Hoelder chain on random inputs.
pub fn verify_certificate(inst: &Instance, cert: &Certificate, options: &VerifyOptions) -> Result<VerifyReport> {
    cert.check(inst.profile(), inst.space_x())?;
    let d = inst.d();
    ensure_len("certificate phi count", d, cert.phi.len())?;
    let (p, r, theta, gamma) = (inst.profile().p(), inst.profile().r(), inst.profile().theta(), inst.profile().gamma());
    let means = geometric_means(&cert.phi, theta);
    let (floor, worst_atom) = means
        .iter()
        .enumerate()
        .fold((f64::INFINITY, 0), |acc, (x, &m)| if m < acc.0 { (m, x) } else { acc });
    let bounds: Vec<f64> = (0..d).map(|j| cert.bound(j, p[j])).collect();
    let separation = (0..d)
        .into_par_iter()
        .map(|j| {
            let s = separation_oracle(&inst.operators()[j], &cert.phi[j], p[j], r[j], &options.oracle, rng::derive(options.seed, 0x7E5 + j as u64))?;
            let relative = s.achieved / bounds[j].powf(p[j]);
            Ok(SeparationCheck {
                bound: bounds[j],
                achieved: s.achieved,
                relative,
                method: s.method,
                exact: s.exact,
                passed: relative <= 1.0 + options.separation_tol,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mu = inst.space_x().weights();
    let phi: Vec<&[f64]> = cert.phi.iter().map(|f| f.values()).collect();
    let s = rng::derive(options.seed, 0xC4A1);
    let chain_bound = |fs: &[Vec<f64>]| -> (f64, bool) {
        let images: Vec<Vec<f64>> = fs.iter().zip(inst.operators()).map(|(f, t)| t.apply_raw(f)).collect();
        let lhs = crate::model::lhs_from_images(mu, &images, gamma);
        let norms: Vec<f64> = (0..d).map(|j| inst.input_norm(j, &fs[j])).collect();
        let target: f64 = (0..d).map(|j| (bounds[j] * norms[j]).powf(gamma[j])).product();
        // Hoelder step: prod_j (int |T_j f_j|^{p_j} phi_j)^{theta_j} / floor.
        let holder: f64 = (0..d)
            .map(|j| {
                let i: f64 = (0..mu.len())
                    .map(|x| {
                        let u = images[j][x].abs();
                        if u == 0.0 {
                            0.0
                        } else {
                            u.powf(p[j]) * phi[j][x] * mu[x]
                        }
                    })
                    .sum();
                i.powf(theta[j])
            })
            .product::<f64>()
            / floor.min(1.0);
        let ratio = if target > 0.0 { lhs / target } else { 0.0 };
        let ok = lhs <= holder * (1.0 + 1e-12) + 1e-300
            && holder <= target / floor.min(1.0) * (1.0 + options.chain_tol) + 1e-300
            && ratio <= (1.0 + options.chain_tol) / floor.min(1.0);
        (ratio, ok)
    };
    let results: Vec<(f64, bool)> = (0..options.trials)
        .into_par_iter()
        .map(|k| {
            let mut g = rng::stream(s, k);
            chain_bound(&sample_inputs(inst, &mut g, k))
        })
        .collect();
    let violations = results.iter().filter(|r| !r.1).count() as u64;
    let worst = results
        .iter()
        .enumerate()
        .map(|(k, r)| (r.0, k as u64))
        .fold((0.0, u64::MAX), ordered_max);
    let worst_input = (violations > 0).then(|| {
        let k = results.iter().position(|r| !r.1).unwrap_or(0) as u64;
        let mut g = rng::stream(s, k);
        sample_inputs(inst, &mut g, k).into_iter().map(DiscreteFunction::new).collect()
    });
    let geometric_residual = (1.0 - floor).max(0.0);
    let passed = floor >= 1.0 - options.geometric_tol && separation.iter().all(|s| s.passed) && violations == 0;
    Ok(VerifyReport {
        passed,
        geometric_floor: floor,
        worst_atom,
        geometric_residual,
        separation,
        chain: ChainCheck {
            trials: options.trials,
            worst_ratio: worst.0,
            violations,
            worst_input,
        },
    })
}

/// Separation value of `f` against the certificate's weight for index `j`.
pub fn certificate_value(inst: &Instance, cert: &Certificate, j: usize, f: &[f64]) -> f64 {
    separation_value(&inst.operators()[j], cert.phi[j].values(), inst.profile().p()[j], inst.profile().r()[j], f)
}
