//! Outer exponent `q != 1`: reweighting by a dual function (`q > 1`) and the
//! augmented instance behind Maurey factorisation (`0 < q < 1`).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::separation::{separation_oracle, OracleBudget};
use super::solve::{disentangle, SolveOptions, SolveReport};
use crate::error::{ensure_len, Error, Result};
use crate::model::{
    geometric_means, lp_norm_raw, AtomicMeasureSpace, Certificate, DiscreteFunction, ExponentProfile, Instance,
    OperatorMatrix,
};
use crate::rng;

/// Log-unit tolerance on the `psi_{d+1}` identity and relative tolerance on
/// the dual norm of the output weights.
pub const REDUCTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionReport {
    /// The weights `g_j`; `None` unless the inner solve certified.
    pub certificate: Option<Certificate>,
    pub solve: SolveReport,
    /// Named diagnostics, see [`duality_certificate`] and [`maurey_factorise`].
    pub checks: BTreeMap<String, f64>,
    pub passed: bool,
}

/// Dual exponent `q / (q - 1)`; 1 for `q = inf`, negative for `q < 1`.
pub fn dual_exponent(q: f64) -> f64 {
    if q.is_infinite() {
        1.0
    } else {
        q / (q - 1.0)
    }
}

fn outer_q(inst: &Instance) -> Result<f64> {
    inst.profile()
        .q()
        .ok_or_else(|| Error::InvalidField {
            field: "exponents.q".into(),
            reason: "this reduction needs an outer exponent q".into(),
        })
}

/// Outer exponent `q > 1` and `G >= 0`: weights `g_j = phi_j G` with
/// `prod_j g_j^{theta_j} >= G` and
/// `(int |T_j f|^{p_j} g_j)^{1/p_j} <= A cap^{1/p_j} ||G||_{q'}^{1/p_j} ||f||`.
///
/// The instance is solved on the measure `G mu / ||G||_{q'}` with atoms where
/// `G = 0` removed; `g_j` vanishes there. Checks: `dominance` (minimum of
/// `prod g^theta / G` over the support of G), `g_norm` and `separation[j]`.
pub fn duality_certificate(inst: &Instance, g: &DiscreteFunction, options: &SolveOptions) -> Result<ReductionReport> {
    let q = outer_q(inst)?;
    if !(q > 1.0) {
        return Err(Error::OutOfRange(format!("duality needs q > 1, got {q}")));
    }
    g.check_on(inst.space_x(), "dual weight G")?;
    if let Some((x, v)) = g.values().iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidField {
            field: format!("G[{x}]"),
            reason: format!("must be finite and >= 0, got {v}"),
        });
    }
    let mu = inst.space_x().weights();
    let qd = dual_exponent(q);
    let g_norm = lp_norm_raw(g.values(), qd, mu, None);
    if g_norm == 0.0 {
        return Err(Error::OutOfRange("dual weight G vanishes identically".into()));
    }
    let support: Vec<usize> = (0..mu.len()).filter(|&x| g.values()[x] > 0.0).collect();
    let reduced = reweighted_instance(inst, &support, |x| g.values()[x] / g_norm * mu[x])?;
    let mut opts = options.clone();
    if opts.constant.is_none() {
        opts.constant = inst.known_constant();
    }
    let solve = disentangle(&reduced, &opts)?;
    let mut checks = BTreeMap::from([("g_norm".to_string(), g_norm)]);
    let Some(cert) = solve.certificate.as_ref() else {
        return Ok(ReductionReport {
            certificate: None,
            solve,
            checks,
            passed: false,
        });
    };
    let n = mu.len();
    let d = inst.d();
    let p = inst.profile().p();
    let weights: Vec<DiscreteFunction> = cert
        .phi
        .iter()
        .map(|phi| {
            let mut v = vec![0.0; n];
            for (k, &x) in support.iter().enumerate() {
                v[x] = phi.values()[k] * g.values()[x];
            }
            DiscreteFunction::new(v)
        })
        .collect();
    let mut out = Certificate::new(weights, cert.constant);
    let cap = solve.cap;
    out.slacks.insert("cap".into(), cap);
    out.slacks.insert("g_norm".into(), g_norm);
    let bounds: Vec<f64> = (0..d).map(|j| cert.constant * (cap * g_norm).powf(1.0 / p[j])).collect();
    for (j, b) in bounds.iter().enumerate() {
        out.slacks.insert(format!("bound[{j}]"), *b);
    }
    let means = geometric_means(&out.phi, inst.profile().theta());
    let dominance = support
        .iter()
        .map(|&x| means[x] / g.values()[x])
        .fold(f64::INFINITY, f64::min);
    checks.insert("dominance".into(), dominance);
    let sep = separation_ratios(inst, &out.phi, &bounds, &options.oracle, options.seed)?;
    for (j, s) in sep.iter().enumerate() {
        checks.insert(format!("separation[{j}]"), *s);
    }
    let passed = dominance >= 1.0 - super::FEASIBILITY_TOL && sep.iter().all(|s| *s <= 1.0 + super::SEPARATION_TOL);
    Ok(ReductionReport {
        certificate: Some(out),
        solve,
        checks,
        passed,
    })
}

/// Restriction of `inst` to `support` with new atom masses, outer exponent dropped.
fn reweighted_instance(inst: &Instance, support: &[usize], mass: impl Fn(usize) -> f64) -> Result<Instance> {
    let x = AtomicMeasureSpace::new(support.iter().map(|&x| mass(x)).collect())?;
    let ops = inst
        .operators()
        .iter()
        .map(|t| {
            let rows: Vec<Vec<f64>> = support.iter().map(|&x| t.row(x).to_vec()).collect();
            OperatorMatrix::from_rows(x.clone(), t.source().clone(), &rows, t.is_positive())
        })
        .collect::<Result<Vec<_>>>()?;
    Instance::new(x, ops, inst.profile().with_q(None)?, inst.known_constant())
}

/// `theta_{d+1}` of the augmented instance in the original scale: `1/q - 1`.
pub fn augmented_theta(q: f64) -> f64 {
    1.0 / q - 1.0
}

/// The `(d+1)`-instance with `tilde theta_j = q theta_j`, `tilde theta_{d+1} = 1 - q`
/// and `T_{d+1}` sending a one-atom space of mass 1 to the constant function
/// (`p_{d+1} = 1`, `r_{d+1} = 2`). Its constant is `A^{q sum gamma / sum tilde gamma}`
/// when the base instance has known constant `A`.
pub fn augmented_instance(inst: &Instance) -> Result<Instance> {
    let q = outer_q(inst)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::OutOfRange(format!("Maurey factorisation needs 0 < q < 1, got {q}")));
    }
    let prof = inst.profile();
    let mut theta: Vec<f64> = prof.theta().iter().map(|t| q * t).collect();
    theta.push(1.0 - q);
    let mut p = prof.p().to_vec();
    p.push(1.0);
    let mut r = prof.r().to_vec();
    r.push(2.0);
    let profile = ExponentProfile::from_theta(&theta, p, r, None)?;
    let n = inst.space_x().atom_count();
    let one = OperatorMatrix::new(inst.space_x().clone(), AtomicMeasureSpace::new(vec![1.0])?, vec![1.0; n], true)?;
    let mut ops = inst.operators().to_vec();
    ops.push(one);
    let known = inst
        .known_constant()
        .map(|a| a.powf(q * prof.gamma_sum() / profile.gamma_sum()));
    Instance::new(inst.space_x().clone(), ops, profile, known)
}

/// Outer exponent `0 < q < 1`: weights `g_j` with `||prod_j g_j^{theta_j}||_{q'} >= 1`
/// and `int |T_j f|^{p_j} g_j <= bound_j^{p_j} ||f||^{p_j}`.
///
/// With `psi` the certificate of the augmented instance and
/// `K = A_aug cap` the bound on `int psi_{d+1}`, the output is
/// `g_j = K^{1/q - 1} psi_j` and `bound_j^{p_j} = K^{1/q - 1} A_aug^{p_j} cap`.
/// `options.constant`, when given, is the base constant `A`.
///
/// Checks: `identity_residual` (log gap between `psi_{d+1}` and
/// `prod_j psi_j^{theta_j q'}`, which replaces it), `psi_integral` relative to
/// `K`, `dual_norm` and `separation[j]`.
pub fn maurey_factorise(inst: &Instance, options: &SolveOptions) -> Result<ReductionReport> {
    let aug = augmented_instance(inst)?;
    let q = outer_q(inst)?;
    let qd = dual_exponent(q);
    let mut opts = options.clone();
    opts.constant = options
        .constant
        .map(|a| a.powf(q * inst.profile().gamma_sum() / aug.profile().gamma_sum()));
    let solve = disentangle(&aug, &opts)?;
    let mut checks = BTreeMap::new();
    let Some(cert) = solve.certificate.as_ref() else {
        return Ok(ReductionReport {
            certificate: None,
            solve,
            checks,
            passed: false,
        });
    };
    let d = inst.d();
    let (theta, p) = (inst.profile().theta(), inst.profile().p());
    let mu = inst.space_x().weights();
    let a_aug = cert.constant;
    let cap = solve.cap;
    let k = a_aug * cap;
    let identity: Vec<f64> = (0..mu.len())
        .map(|x| (0..d).map(|j| theta[j] * qd * cert.phi[j].values()[x].ln()).sum::<f64>().exp())
        .collect();
    let residual = (0..mu.len())
        .map(|x| (cert.phi[d].values()[x].ln() - identity[x].ln()).abs())
        .fold(0.0, f64::max);
    checks.insert("identity_residual".into(), residual);
    let integral: f64 = identity.iter().zip(mu).map(|(v, m)| v * m).sum();
    checks.insert("psi_integral".into(), integral / k);

    let scale = k.powf(1.0 / q - 1.0);
    let g: Vec<DiscreteFunction> = cert.phi[..d].iter().map(|f| f.scaled(scale)).collect();
    let means = geometric_means(&g, theta);
    let dual_norm = means
        .iter()
        .zip(mu)
        .map(|(m, w)| if *m == 0.0 { f64::INFINITY } else { m.powf(qd) * w })
        .sum::<f64>()
        .powf(1.0 / qd);
    checks.insert("dual_norm".into(), dual_norm);
    let bounds: Vec<f64> = (0..d)
        .map(|j| (scale * a_aug.powf(p[j]) * cap).powf(1.0 / p[j]))
        .collect();
    let mut out = Certificate::new(g, a_aug);
    out.slacks.insert("cap".into(), cap);
    out.slacks.insert("augmented_constant".into(), a_aug);
    for (j, b) in bounds.iter().enumerate() {
        out.slacks.insert(format!("bound[{j}]"), *b);
    }
    let sep = separation_ratios(inst, &out.phi, &bounds, &options.oracle, options.seed)?;
    for (j, s) in sep.iter().enumerate() {
        checks.insert(format!("separation[{j}]"), *s);
    }
    let passed = integral <= k * (1.0 + 1e-9)
        && dual_norm >= 1.0 - REDUCTION_TOL
        && sep.iter().all(|s| *s <= 1.0 + super::SEPARATION_TOL);
    Ok(ReductionReport {
        certificate: Some(out),
        solve,
        checks,
        passed,
    })
}

/// `sup_f int |T_j f|^{p_j} w_j / (bound_j ||f||)^{p_j}` as found by the oracle.
fn separation_ratios(
    inst: &Instance,
    w: &[DiscreteFunction],
    bounds: &[f64],
    budget: &OracleBudget,
    seed: u64,
) -> Result<Vec<f64>> {
    ensure_len("weight count", inst.d(), w.len())?;
    let (p, r) = (inst.profile().p(), inst.profile().r());
    (0..inst.d())
        .into_par_iter()
        .map(|j| {
            let s = separation_oracle(&inst.operators()[j], &w[j], p[j], r[j], budget, rng::derive(seed, 0x2ED + j as u64))?;
            Ok(s.achieved / bounds[j].powf(p[j]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disentangle::CapPolicy;

    fn unit_cap() -> SolveOptions {
        SolveOptions {
            cap: Some(CapPolicy::Fixed { cap: 1.0 }),
            ..SolveOptions::default()
        }
    }

    fn averaging(q: f64) -> Instance {
        let x = AtomicMeasureSpace::new(vec![1.0]).unwrap();
        let y = AtomicMeasureSpace::new(vec![1.0, 1.0]).unwrap();
        let t = OperatorMatrix::from_rows(x.clone(), y, &[vec![0.5, 0.5]], true).unwrap();
        let profile = ExponentProfile::from_theta(&[0.5, 0.5], vec![1.0, 1.0], vec![1.0, 1.0], Some(q)).unwrap();
        Instance::new(x, vec![t.clone(), t], profile, Some(1.0)).unwrap()
    }

    fn identity2(q: f64) -> Instance {
        let x = AtomicMeasureSpace::new(vec![1.0, 1.0]).unwrap();
        let t = OperatorMatrix::identity(x.clone());
        let profile = ExponentProfile::from_theta(&[0.5, 0.5], vec![2.0, 2.0], vec![2.0, 2.0], Some(q)).unwrap();
        Instance::new(x, vec![t.clone(), t], profile, Some(1.0)).unwrap()
    }

    #[test]
    fn averaging_lifted_gives_g() {
        let inst = averaging(2.0);
        let g = DiscreteFunction::new(vec![1.0]);
        let rep = duality_certificate(&inst, &g, &unit_cap()).unwrap();
        assert!(rep.passed, "{rep:?}");
        for w in &rep.certificate.unwrap().phi {
            assert!((w.values()[0] - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn zero_atoms_dropped() {
        let inst = identity2(2.0);
        let g = DiscreteFunction::new(vec![1.0, 0.0]);
        let rep = duality_certificate(&inst, &g, &unit_cap()).unwrap();
        assert!(rep.passed, "{rep:?}");
        for w in &rep.certificate.unwrap().phi {
            assert_eq!(w.values()[1], 0.0);
            assert!(w.values()[0] > 0.0);
        }
        assert!(duality_certificate(&inst, &DiscreteFunction::zeros(2), &unit_cap()).is_err());
    }

    #[test]
    fn constant_weight_scales_solution() {
        let inst = identity2(2.0);
        let plain = disentangle(&inst.with_profile(inst.profile().with_q(None).unwrap()).unwrap(), &unit_cap()).unwrap();
        let phi = plain.certificate.unwrap().phi;
        let c = 0.3;
        let rep = duality_certificate(&inst, &DiscreteFunction::constant(2, c), &unit_cap()).unwrap();
        let g = rep.certificate.unwrap().phi;
        for j in 0..2 {
            for x in 0..2 {
                assert!((g[j].values()[x] - c * phi[j].values()[x]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn augmented_exponents() {
        assert!((augmented_theta(1.0 / 3.0) - 2.0).abs() < 1e-15);
        let aug = augmented_instance(&averaging(1.0 / 3.0)).unwrap();
        assert_eq!(aug.d(), 3);
        assert!((aug.profile().theta().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(augmented_instance(&averaging(2.0)).is_err());
    }

    #[test]
    fn one_atom_maurey() {
        let x = AtomicMeasureSpace::new(vec![1.0]).unwrap();
        let profile = ExponentProfile::new(vec![1.0], vec![1.0], vec![1.0], Some(0.5)).unwrap();
        let inst = Instance::new(x.clone(), vec![OperatorMatrix::identity(x)], profile, Some(1.0)).unwrap();
        let rep = maurey_factorise(&inst, &unit_cap()).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!((rep.certificate.unwrap().phi[0].values()[0] - 1.0).abs() <= 1e-8);
        assert!(rep.checks["identity_residual"] <= REDUCTION_TOL);
    }

    #[test]
    fn averaging_maurey_constant() {
        let rep = maurey_factorise(&averaging(0.5), &unit_cap()).unwrap();
        assert!(rep.passed, "{rep:?}");
        let cert = rep.certificate.unwrap();
        assert!((cert.phi[0].values()[0] - cert.phi[1].values()[0]).abs() <= 1e-8);
        assert!(rep.checks["dual_norm"] >= 1.0 - REDUCTION_TOL);
    }
}
