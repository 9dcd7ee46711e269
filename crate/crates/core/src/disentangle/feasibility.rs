//! Finite-family feasibility in log-weights `u_j = log phi_j`:
//!
//! ```text
//! sum_j theta_j u_j(x) >= 0                  for every atom x
//! sum_x g(x) e^{u_j(x)} mu(x) <= C_j         for every g in G_j,  C_j = A^{p_j} cap
//! ```
//!
//! The solver works on the dual: over convex combinations `h_j` of the
//! rescaled members `g / C_j` it maximises `V = sum_x mu(x) prod_j h_j(x)^{theta_j}`
//! by multiplicative updates. Hoelder's inequality turns any dual point with
//! `V > 1` into a proof of infeasibility; conversely the weights
//! `phi_j = s_j M / h_j` (with `M = prod_j h_j^{theta_j}`) violate every
//! constraint by at most `t_hi = 1/2 log(V prod_j max_g rho_{jg}^{theta_j})`.

use serde::Serialize;

use super::family::ConstraintFamily;
use crate::error::{ensure_len, Error, Result};
use crate::model::{AtomicMeasureSpace, DiscreteFunction, ExponentProfile};

/// Maximum allowed violation of a returned solution.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Clamp on `|u_j(x)|`, keeping `e^u` finite.
pub const LOG_BOX: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Extrapolated multiplicative steps, undone whenever `V` would drop.
    pub over_relaxation: bool,
}

impl Default for FeasibilityOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            tolerance: FEASIBILITY_TOL,
            over_relaxation: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    /// Log-weights of the best primal point (always populated).
    pub u: Vec<DiscreteFunction>,
    /// Certified lower bound on the optimal violation (positive: infeasible).
    pub t_lo: f64,
    /// Violation bound of the returned point from duality.
    pub t_hi: f64,
    /// Violation of `u` measured directly: geometric constraints in log
    /// units, integral constraints relative to `C_j`.
    pub max_violation: f64,
    pub iterations: usize,
    /// Members carrying dual weight, per index.
    pub binding: Vec<Vec<usize>>,
    #[serde(skip)]
    pub(crate) lambda: Vec<Vec<f64>>,
}

impl FeasibilityResult {
    pub fn phi(&self) -> Vec<DiscreteFunction> {
        self.u
            .iter()
            .map(|u| DiscreteFunction::new(u.values().iter().map(|v| v.exp()).collect()))
            .collect()
    }
}

/// Solves the feasibility problem for families `G_j` at constants
/// `C_j = a^{p_j} cap`.
///
/// ```
/// use factorlab::disentangle::{feasibility_solve, ConstraintFamily, FeasibilityOptions, FeasibilityStatus};
/// use factorlab::model::{AtomicMeasureSpace, DiscreteFunction, ExponentProfile};
///
/// let x = AtomicMeasureSpace::new(vec![1.0]).unwrap();
/// let profile = ExponentProfile::new(vec![0.5, 0.5], vec![1.0, 1.0], vec![1.0, 1.0], None).unwrap();
/// let fam = ConstraintFamily::from_values(
///     1,
///     &[vec![DiscreteFunction::new(vec![2.0])], vec![DiscreteFunction::new(vec![0.5])]],
/// )
/// .unwrap();
/// let res = feasibility_solve(&x, &profile, &fam, 1.0, 1.0, &FeasibilityOptions::default()).unwrap();
/// assert_eq!(res.status, FeasibilityStatus::Feasible);
/// let phi = res.phi();
/// assert!((phi[0].values()[0] - 0.5).abs() < 1e-12 && (phi[1].values()[0] - 2.0).abs() < 1e-12);
/// ```
pub fn feasibility_solve(
    space: &AtomicMeasureSpace,
    profile: &ExponentProfile,
    families: &ConstraintFamily,
    a: f64,
    cap: f64,
    options: &FeasibilityOptions,
) -> Result<FeasibilityResult> {
    ensure_len("constraint families vs exponent profile", profile.d(), families.d())?;
    ensure_len("constraint families vs measure_x", space.atom_count(), families.atoms())?;
    for j in 0..families.d() {
        if families.members(j).is_empty() {
            return Err(Error::InvalidField {
                field: format!("families[{j}]"),
                reason: "every index needs at least one constraint".into(),
            });
        }
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::OutOfRange(format!("constant must be finite and > 0, got {a}")));
    }
    if !(cap >= 1.0 && cap.is_finite()) {
        return Err(Error::OutOfRange(format!("cap must be finite and >= 1, got {cap}")));
    }
    let c: Vec<f64> = profile.p().iter().map(|p| a.powf(*p) * cap).collect();
    Ok(solve_scaled(space.weights(), profile.theta(), families, &c, None, options))
}

struct DualPoint {
    /// `h_j(x)` per index.
    h: Vec<Vec<f64>>,
    /// `M(x) = prod_j h_j(x)^{theta_j}`, zero where some `h_j` vanishes.
    m: Vec<f64>,
    v: f64,
}

struct Scaled<'a> {
    mu: &'a [f64],
    theta: &'a [f64],
    fam: &'a ConstraintFamily,
    inv_c: Vec<f64>,
}

impl Scaled<'_> {
    fn eval(&self, lam: &[Vec<f64>]) -> DualPoint {
        let n = self.mu.len();
        let h: Vec<Vec<f64>> = (0..self.fam.d())
            .map(|j| {
                let mut hj = vec![0.0; n];
                for (mem, l) in self.fam.members(j).iter().zip(&lam[j]) {
                    let w = l * self.inv_c[j];
                    for (&x, g) in mem.support.iter().zip(&mem.values) {
                        hj[x] += w * g;
                    }
                }
                hj
            })
            .collect();
        let m: Vec<f64> = (0..n)
            .map(|x| {
                let mut lg = 0.0;
                for (hj, t) in h.iter().zip(self.theta) {
                    if hj[x] <= 0.0 {
                        return 0.0;
                    }
                    lg += t * hj[x].ln();
                }
                lg.exp()
            })
            .collect();
        let v = m.iter().zip(self.mu).map(|(a, b)| a * b).sum();
        DualPoint { h, m, v }
    }

    /// `rho_{jg} = int (g / C_j) M / h_j dmu / V`.
    fn rho(&self, pt: &DualPoint) -> Vec<Vec<f64>> {
        (0..self.fam.d())
            .map(|j| {
                let hj = &pt.h[j];
                self.fam
                    .members(j)
                    .iter()
                    .map(|mem| {
                        let s: f64 = mem
                            .support
                            .iter()
                            .zip(&mem.values)
                            .filter(|(&x, _)| pt.m[x] > 0.0)
                            .map(|(&x, g)| self.mu[x] * g * pt.m[x] / hj[x])
                            .sum();
                        s * self.inv_c[j] / pt.v
                    })
                    .collect()
            })
            .collect()
    }

    /// Primal weights from a dual point; `tight` pins the geometric means to 1.
    fn primal(&self, pt: &DualPoint, rho_max: &[f64], t_hi: f64) -> Vec<Vec<f64>> {
        let n = self.mu.len();
        let d = self.fam.d();
        // Tight: s_j = U / (V rho_j), so prod phi^theta = 1 and integrals = U C_j.
        // Otherwise centred: integrals e^{t} C_j and geometric means e^{-t}.
        let shift = if !t_hi.is_finite() {
            0.0
        } else if t_hi <= 0.0 {
            2.0 * t_hi
        } else {
            t_hi.min(LOG_BOX)
        };
        let log_s: Vec<f64> = (0..d).map(|j| shift - pt.v.ln() - rho_max[j].ln()).collect();
        let mut u = vec![vec![0.0; n]; d];
        for x in 0..n {
            if pt.m[x] > 0.0 {
                let lm = pt.m[x].ln();
                for j in 0..d {
                    u[j][x] = (log_s[j] + lm - pt.h[j][x].ln()).clamp(-LOG_BOX, LOG_BOX);
                }
            } else {
                let uncovered: Vec<bool> = (0..d).map(|j| pt.h[j][x] <= 0.0).collect();
                let th: f64 = (0..d).filter(|&j| uncovered[j]).map(|j| self.theta[j]).sum();
                let low = if th < 1.0 { -LOG_BOX * th / (1.0 - th) } else { 0.0 };
                for j in 0..d {
                    u[j][x] = if uncovered[j] { LOG_BOX } else { low.max(-LOG_BOX) };
                }
            }
        }
        u
    }

    /// Direct violation of `u`: max of the geometric deficit (log units) and
    /// the relative excess of the integral constraints.
    fn violation(&self, u: &[Vec<f64>]) -> f64 {
        let n = self.mu.len();
        let geo = (0..n)
            .map(|x| -u.iter().zip(self.theta).map(|(uj, t)| t * uj[x]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut int = f64::NEG_INFINITY;
        for (j, uj) in u.iter().enumerate() {
            let w: Vec<f64> = uj.iter().map(|v| v.exp()).collect();
            for mem in self.fam.members(j) {
                int = int.max(mem.integrate(&w, self.mu) * self.inv_c[j] - 1.0);
            }
        }
        geo.max(int)
    }
}

pub(crate) fn solve_scaled(
    mu: &[f64],
    theta: &[f64],
    fam: &ConstraintFamily,
    c: &[f64],
    warm: Option<Vec<Vec<f64>>>,
    options: &FeasibilityOptions,
) -> FeasibilityResult {
    let sc = Scaled {
        mu,
        theta,
        fam,
        inv_c: c.iter().map(|c| 1.0 / c).collect(),
    };
    let d = fam.d();
    let tol = options.tolerance;
    let mut lam: Vec<Vec<f64>> = match warm {
        Some(w) if w.len() == d && (0..d).all(|j| w[j].len() == fam.members(j).len()) => w,
        _ => (0..d)
            .map(|j| {
                let k = fam.members(j).len();
                vec![1.0 / k as f64; k]
            })
            .collect(),
    };
    let mut omega: f64 = 1.0;
    let mut previous: Option<(Vec<Vec<f64>>, f64)> = None;
    let mut pt = sc.eval(&lam);
    let mut iterations = 0;
    let finish = |status, pt: &DualPoint, rho: &[Vec<f64>], lam: Vec<Vec<f64>>, iterations, u: Vec<Vec<f64>>, viol| {
        let t_lo = 0.5 * pt.v.ln();
        let rmax: Vec<f64> = rho.iter().map(|r| r.iter().cloned().fold(0.0, f64::max)).collect();
        let t_hi = t_hi_of(pt, theta, &rmax);
        let binding = lam
            .iter()
            .map(|l| (0..l.len()).filter(|&k| l[k] > 1e-6).collect())
            .collect();
        FeasibilityResult {
            status,
            u: u.into_iter().map(DiscreteFunction::new).collect(),
            t_lo,
            t_hi,
            max_violation: viol,
            iterations,
            binding,
            lambda: lam,
        }
    };
    loop {
        if let Some((plam, pv)) = &previous {
            if pt.v < *pv && omega > 1.0 {
                lam = plam.clone();
                omega = 1.0;
                pt = sc.eval(&lam);
            } else if options.over_relaxation {
                omega = (omega * 1.5).min(4.0);
            }
        }
        let rho = sc.rho(&pt);
        let rmax: Vec<f64> = rho.iter().map(|r| r.iter().cloned().fold(0.0, f64::max)).collect();
        let t_lo = 0.5 * pt.v.ln();
        let t_hi = t_hi_of(&pt, theta, &rmax);
        let covered = pt.m.iter().all(|&m| m > 0.0);
        let done = iterations >= options.max_iterations;
        if t_lo > tol {
            let u = sc.primal(&pt, &rmax, t_hi);
            let viol = sc.violation(&u);
            return finish(FeasibilityStatus::Infeasible, &pt, &rho, lam, iterations, u, viol);
        }
        if t_hi <= tol || (!covered && iterations % 64 == 0) || done {
            let u = sc.primal(&pt, &rmax, t_hi);
            let viol = sc.violation(&u);
            if viol <= tol {
                return finish(FeasibilityStatus::Feasible, &pt, &rho, lam, iterations, u, viol);
            }
            if done {
                return finish(FeasibilityStatus::Undecided, &pt, &rho, lam, iterations, u, viol);
            }
        }
        previous = options.over_relaxation.then(|| (lam.clone(), pt.v));
        for (lj, rj) in lam.iter_mut().zip(&rho) {
            let mut sum = 0.0;
            for (l, r) in lj.iter_mut().zip(rj) {
                *l *= if omega == 1.0 { *r } else { r.powf(omega) };
                sum += *l;
            }
            if sum > 0.0 {
                lj.iter_mut().for_each(|l| *l = (*l / sum).max(1e-300));
            }
        }
        pt = sc.eval(&lam);
        iterations += 1;
    }
}

fn t_hi_of(pt: &DualPoint, theta: &[f64], rmax: &[f64]) -> f64 {
    if pt.m.iter().any(|&m| m == 0.0) || pt.v <= 0.0 {
        return f64::INFINITY;
    }
    0.5 * (pt.v.ln() + rmax.iter().zip(theta).map(|(r, t)| t * r.ln()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_atom(g1: f64, g2: f64, a: f64) -> FeasibilityResult {
        let x = AtomicMeasureSpace::new(vec![1.0]).unwrap();
        let profile = ExponentProfile::new(vec![0.5, 0.5], vec![1.0, 1.0], vec![1.0, 1.0], None).unwrap();
        let fam = ConstraintFamily::from_values(
            1,
            &[vec![DiscreteFunction::new(vec![g1])], vec![DiscreteFunction::new(vec![g2])]],
        )
        .unwrap();
        feasibility_solve(&x, &profile, &fam, a, 1.0, &FeasibilityOptions::default()).unwrap()
    }

    #[test]
    fn one_atom_closed_form() {
        let r = one_atom(2.0, 0.5, 1.0);
        assert_eq!(r.status, FeasibilityStatus::Feasible);
        assert!((r.u[0].values()[0] + 2f64.ln()).abs() < 1e-12);
        assert!((r.u[1].values()[0] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn one_atom_infeasible() {
        let r = one_atom(2.0, 0.5, 0.5);
        assert_eq!(r.status, FeasibilityStatus::Infeasible);
        // u_1 <= -log 4, u_2 <= 0: the deficit is log 4 split evenly.
        assert!((r.t_lo - 0.5 * 2f64.ln()).abs() < 1e-12, "{}", r.t_lo);
    }

    #[test]
    fn uncovered_atoms_get_large_weights() {
        let x = AtomicMeasureSpace::new(vec![1.0, 1.0]).unwrap();
        let profile = ExponentProfile::new(vec![0.5, 0.5], vec![1.0, 1.0], vec![1.0, 1.0], None).unwrap();
        let fam = ConstraintFamily::from_values(
            2,
            &[vec![DiscreteFunction::new(vec![1.0, 0.0])], vec![DiscreteFunction::new(vec![0.5, 1.0])]],
        )
        .unwrap();
        let r = feasibility_solve(&x, &profile, &fam, 1.0, 1.0, &FeasibilityOptions::default()).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Feasible, "{r:?}");
        assert!(r.max_violation <= FEASIBILITY_TOL);
    }

    #[test]
    fn more_constraints_never_help() {
        // Adding a member can only raise the certified lower bound.
        let x = AtomicMeasureSpace::new(vec![1.0, 2.0, 0.5]).unwrap();
        let profile = ExponentProfile::new(vec![0.6, 1.2], vec![1.5, 2.0], vec![2.0, 2.0], None).unwrap();
        let base = vec![
            vec![DiscreteFunction::new(vec![1.0, 0.2, 0.3])],
            vec![DiscreteFunction::new(vec![0.5, 1.0, 2.0])],
        ];
        let mut more = base.clone();
        more[0].push(DiscreteFunction::new(vec![0.1, 3.0, 0.2]));
        let opts = FeasibilityOptions::default();
        for a in [0.2, 0.5, 1.0, 2.0] {
            let f0 = ConstraintFamily::from_values(3, &base).unwrap();
            let f1 = ConstraintFamily::from_values(3, &more).unwrap();
            let r0 = feasibility_solve(&x, &profile, &f0, a, 1.0, &opts).unwrap();
            let r1 = feasibility_solve(&x, &profile, &f1, a, 1.0, &opts).unwrap();
            assert!(r1.t_hi >= r0.t_lo - 1e-9);
            if r0.status == FeasibilityStatus::Infeasible {
                assert_eq!(r1.status, FeasibilityStatus::Infeasible);
            }
        }
    }
}
