use serde::Serialize;

use crate::disentangle::{disentangle, CapPolicy, SolveOptions, SolveOutcome, CAP_LIMIT};
use crate::error::{Error, Result};
use crate::model::{AtomicMeasureSpace, ExponentProfile, Instance, OperatorMatrix};
use crate::oracle::estimate_best_constant;

/// Largest number of atoms per axis a gallery instance may use.
pub const MAX_ATOMS: usize = 1 << 12;
/// Per-axis limit for the homogeneity kind, whose space has `n^2` atoms.
pub const MAX_HOMOGENEITY_AXIS: usize = 1 << 10;

pub const BEYOND_RANGE_LEVELS: [usize; 3] = [2048, 3072, 4096];
pub const HOMOGENEITY_LEVELS: [usize; 3] = [1 << 6, 1 << 8, 1 << 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GalleryKind {
    /// Rank-one operators with an `L^gamma`-only profile, exponents rescaled.
    Homogeneity,
    /// Identity on `l^1` paired with a constant map, requested at `p_1 > r_1 = 1`.
    BeyondRange,
    /// The same operators at `p = r = 1`.
    InRange,
    /// Identity on `l^1` requested at `p_1 = 2`; the required cap grows with `n`.
    NonConvex,
}

impl GalleryKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "homogeneity" => Ok(Self::Homogeneity),
            "beyond-range" => Ok(Self::BeyondRange),
            "in-range" => Ok(Self::InRange),
            "non-convex" | "non-p-convex" => Ok(Self::NonConvex),
            _ => Err(Error::OutOfRange(format!(
                "unknown gallery kind {s:?}; expected homogeneity, beyond-range, in-range or non-convex"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Homogeneity => "homogeneity",
            Self::BeyondRange => "beyond-range",
            Self::InRange => "in-range",
            Self::NonConvex => "non-convex",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Feasible,
    /// No certificate below the cap limit.
    Infeasible,
    /// Each truncation is feasible but the best constant, or the required cap,
    /// grows without bound in `n`.
    Divergent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GalleryParams {
    /// Atoms (per axis for the homogeneity kind).
    pub n: usize,
    /// Exponent rescaling for the homogeneity kind.
    pub lambda: f64,
}

impl Default for GalleryParams {
    fn default() -> Self {
        Self { n: 4096, lambda: 2.0 }
    }
}

#[derive(Debug, Clone)]
pub struct GalleryInstance {
    pub kind: GalleryKind,
    pub params: GalleryParams,
    pub instance: Instance,
    pub verdict: Verdict,
    pub witnesses: &'static str,
    pub description: String,
    /// Smallest cap at which a certificate exists, when known in closed form.
    pub required_cap: Option<f64>,
    /// `A^{sum gamma}` in closed form, when known.
    pub closed_form: Option<f64>,
    pub options: SolveOptions,
}

fn doubling() -> CapPolicy {
    CapPolicy::Doubling {
        start: 1.0,
        limit: CAP_LIMIT,
    }
}

/// `T_1` the identity on `n` atoms of mass `1/n` with `r_1 = 1`, `T_2` the
/// constant map from one atom with `p_2 = r_2 = 1`; `theta = (theta_1, 1 - theta_1)`.
/// Certificates need cap [`identity_required_cap`].
pub fn identity_constant(n: usize, p1: f64, theta1: f64) -> Result<Instance> {
    if n == 0 || n > MAX_ATOMS {
        return Err(Error::OutOfRange(format!("n must lie in 1..={MAX_ATOMS}, got {n}")));
    }
    let x = AtomicMeasureSpace::probability(n)?;
    let point = AtomicMeasureSpace::new(vec![1.0])?;
    let t1 = OperatorMatrix::identity(x.clone());
    let t2 = OperatorMatrix::new(x.clone(), point, vec![1.0; n], true)?;
    let profile = ExponentProfile::from_theta(&[theta1, 1.0 - theta1], vec![p1, 1.0], vec![1.0, 1.0], None)?;
    // sup of sum mu |f|^{gamma_1} / ||f||_1^{gamma_1} over l^1(mu)
    let g1 = profile.gamma()[0];
    let a = (n as f64).powf((g1 - 1.0).max(0.0) / profile.gamma_sum());
    Instance::new(x, vec![t1, t2], profile, Some(a))
}

/// Smallest cap of a certificate for [`identity_constant`] at its best
/// constant: `n^{(p_1 - 1) theta_1} / A^{sum gamma}`, `p_1 >= 1`.
pub fn identity_required_cap(n: usize, p1: f64, theta1: f64) -> f64 {
    let g1 = p1 * theta1;
    (n as f64).powf((p1 - 1.0) * theta1 - (g1 - 1.0).max(0.0))
}

/// `Phi(s) = s^{-1/gamma} (1 + |log s|)^{-2/gamma}`: in `L^gamma` of the
/// line, in no other `L^q`.
pub fn power_profile(s: f64, gamma: f64) -> f64 {
    s.powf(-1.0 / gamma) * (1.0 + s.ln().abs()).powf(-2.0 / gamma)
}

/// Atoms `s_k = e^{u_k}` on a uniform grid `u` in `[-ln n, ln n]`, masses `s_k du`.
pub fn log_grid(n: usize) -> Result<AtomicMeasureSpace> {
    if n < 2 {
        return Err(Error::OutOfRange(format!("log grid needs n >= 2, got {n}")));
    }
    let l = (n as f64).ln();
    let du = 2.0 * l / (n - 1) as f64;
    AtomicMeasureSpace::new((0..n).map(|k| (-l + k as f64 * du).exp() * du).collect())
}

fn log_points(n: usize) -> Vec<f64> {
    let l = (n as f64).ln();
    let du = 2.0 * l / (n - 1) as f64;
    (0..n).map(|k| (-l + k as f64 * du).exp()).collect()
}

const G: [[f64; 2]; 2] = [[1.0, 2.0], [2.0, 1.0]];

/// `X = S x S` (S the log grid), `T_j f(s_1, s_2) = <f, g_j> Phi(s_j)` on two
/// atoms of unit mass, `gamma = (1/lambda, 1/lambda)`, `p = 2 gamma`, `r = 2`.
pub fn homogeneity_instance(n: usize, lambda: f64) -> Result<(Instance, f64)> {
    if n < 2 || n > MAX_HOMOGENEITY_AXIS {
        return Err(Error::OutOfRange(format!("n must lie in 2..={MAX_HOMOGENEITY_AXIS}, got {n}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) || lambda == 1.0 {
        return Err(Error::OutOfRange(format!("lambda must be finite, > 0 and != 1, got {lambda}")));
    }
    let axis = log_grid(n)?;
    let s = log_points(n);
    let phi: Vec<f64> = s.iter().map(|&v| power_profile(v, 1.0)).collect();
    let w = axis.weights();
    let x = AtomicMeasureSpace::new((0..n * n).map(|k| w[k / n] * w[k % n]).collect())?;
    let y = AtomicMeasureSpace::new(vec![1.0, 1.0])?;
    let ops = (0..2)
        .map(|j| {
            let mut entries = Vec::with_capacity(2 * n * n);
            for k in 0..n * n {
                let v = phi[if j == 0 { k / n } else { k % n }];
                entries.extend([G[j][0] * v, G[j][1] * v]);
            }
            OperatorMatrix::new(x.clone(), y.clone(), entries, true)
        })
        .collect::<Result<Vec<_>>>()?;
    let gamma = 1.0 / lambda;
    let profile = ExponentProfile::new(vec![gamma; 2], vec![2.0 * gamma; 2], vec![2.0; 2], None)?;
    // Hoelder in Y and the product structure of X
    let integral: f64 = phi.iter().zip(w).map(|(f, m)| f.powf(gamma) * m).sum();
    let closed = (0..2)
        .map(|j| (G[j][0].powi(2) + G[j][1].powi(2)).sqrt().powf(gamma) * integral)
        .product();
    Ok((Instance::new(x, ops, profile, None)?, closed))
}

pub fn gallery(kind: GalleryKind, params: GalleryParams) -> Result<GalleryInstance> {
    let n = params.n;
    let probe = SolveOptions {
        probe: true,
        cap: Some(doubling()),
        ..SolveOptions::default()
    };
    Ok(match kind {
        GalleryKind::BeyondRange => {
            let (p1, theta1) = (20.0, 0.05);
            GalleryInstance {
                kind,
                params,
                instance: identity_constant(n, p1, theta1)?,
                verdict: if identity_required_cap(n, p1, theta1) > CAP_LIMIT { Verdict::Infeasible } else { Verdict::Feasible },
                witnesses: "disentanglement fails for positive operators once p_j > r_j",
                description: format!("identity on l^1 of {n} atoms at p_1 = 20 beside a constant map"),
                required_cap: Some(identity_required_cap(n, p1, theta1)),
                closed_form: Some(1.0),
                options: probe,
            }
        }
        GalleryKind::InRange => GalleryInstance {
            kind,
            params,
            instance: identity_constant(n, 1.0, 0.05)?,
            verdict: Verdict::Feasible,
            witnesses: "exact-constant disentanglement for positive operators with p_j <= r_j",
            description: format!("identity on l^1 of {n} atoms at p = r = 1 beside a constant map"),
            required_cap: Some(1.0),
            closed_form: Some(1.0),
            options: SolveOptions::default(),
        },
        GalleryKind::NonConvex => GalleryInstance {
            kind,
            params,
            instance: identity_constant(n, 2.0, 0.5)?,
            verdict: Verdict::Divergent,
            witnesses: "l^1 is not 2-convex, so no disentanglement uniform in n at p_1 = 2",
            description: format!("identity on l^1 of {n} atoms requested at p_1 = 2; cap grows like n^(1/2)"),
            required_cap: Some(identity_required_cap(n, 2.0, 0.5)),
            closed_form: Some(1.0),
            options: probe,
        },
        GalleryKind::Homogeneity => {
            let (inst, closed) = homogeneity_instance(n, params.lambda)?;
            GalleryInstance {
                kind,
                params,
                instance: inst,
                verdict: Verdict::Divergent,
                witnesses: "the homogeneity condition is necessary",
                description: format!(
                    "rank-one operators on a {n} x {n} log grid, exponents rescaled by {}",
                    params.lambda
                ),
                required_cap: None,
                closed_form: Some(closed),
                options: SolveOptions {
                    estimate_budget: 60,
                    ..SolveOptions::default()
                },
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GalleryCheck {
    pub verdict: Verdict,
    /// Solver outcome, or `None` when only the constant was estimated.
    pub outcome: Option<SolveOutcome>,
    pub cap: Option<f64>,
    /// Estimated `A^{sum gamma}` for the homogeneity kind.
    pub estimate: Option<f64>,
    pub agrees: bool,
}

/// Runs the recommended solve (or constant estimate) and compares it with the
/// expected verdict at this refinement level.
pub fn check_gallery(g: &GalleryInstance) -> Result<GalleryCheck> {
    if g.kind == GalleryKind::Homogeneity {
        let est = estimate_best_constant(&g.instance, g.options.estimate_budget, g.options.seed)?;
        let closed = g.closed_form.unwrap_or(f64::INFINITY);
        let agrees = est.lower_bound <= closed * (1.0 + 1e-9) && est.lower_bound >= closed * (1.0 - 1e-3);
        return Ok(GalleryCheck {
            verdict: g.verdict,
            outcome: None,
            cap: None,
            estimate: Some(est.lower_bound),
            agrees,
        });
    }
    let rep = disentangle(&g.instance, &g.options)?;
    let certified = rep.outcome == SolveOutcome::Certified;
    let required = g.required_cap.unwrap_or(1.0);
    let agrees = match g.verdict {
        Verdict::Infeasible => !certified && rep.cap > CAP_LIMIT,
        Verdict::Feasible => certified,
        Verdict::Divergent => certified && rep.cap >= required * (1.0 - 1e-6),
    };
    Ok(GalleryCheck {
        verdict: g.verdict,
        outcome: Some(rep.outcome),
        cap: Some(rep.cap),
        estimate: None,
        agrees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DiscreteFunction;

    #[test]
    fn identity_constant_values() {
        let inst = identity_constant(8, 2.0, 0.9).unwrap();
        // basis vector attains n^{gamma_1 - 1}
        let f = [DiscreteFunction::basis(8, 3), DiscreteFunction::constant(1, 1.0)];
        let want = 8f64.powf(0.8);
        assert!((inst.ratio(&f).unwrap() - want).abs() < 1e-12 * want);
        let a = inst.known_constant().unwrap();
        assert!((a.powf(inst.profile().gamma_sum()) - want).abs() < 1e-12 * want);
        assert_eq!(identity_constant(8, 1.0, 0.05).unwrap().known_constant(), Some(1.0));
        assert!((identity_required_cap(4096, 20.0, 0.05) - 4096f64.powf(0.95)).abs() < 1e-9);
        assert!((identity_required_cap(4096, 2.0, 0.9) - 4096f64.powf(0.1)).abs() < 1e-9);
        assert!((identity_required_cap(4096, 2.0, 0.5) - 64.0).abs() < 1e-9);
    }

    #[test]
    fn homogeneity_closed_form() {
        let (inst, closed) = homogeneity_instance(16, 2.0).unwrap();
        let g = [DiscreteFunction::new(vec![1.0, 2.0]), DiscreteFunction::new(vec![2.0, 1.0])];
        assert!((inst.ratio(&g).unwrap() - closed).abs() < 1e-12 * closed);
        let off = [DiscreteFunction::new(vec![1.0, 0.0]), DiscreteFunction::new(vec![2.0, 1.0])];
        assert!(inst.ratio(&off).unwrap() < closed);
        let grows: Vec<f64> = [16, 64, 256].iter().map(|&n| homogeneity_instance(n, 2.0).unwrap().1).collect();
        assert!(grows.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn small_levels_agree() {
        for (kind, n) in [(GalleryKind::InRange, 64), (GalleryKind::NonConvex, 64), (GalleryKind::Homogeneity, 16)] {
            let g = gallery(kind, GalleryParams { n, lambda: 2.0 }).unwrap();
            let c = check_gallery(&g).unwrap();
            assert!(c.agrees, "{kind:?} {c:?}");
        }
    }

    #[test]
    fn kinds() {
        assert_eq!(GalleryKind::parse("beyond-range").unwrap(), GalleryKind::BeyondRange);
        assert!(GalleryKind::parse("zafran").is_err());
        let g = gallery(GalleryKind::BeyondRange, GalleryParams { n: 2048, lambda: 2.0 }).unwrap();
        assert_eq!(g.verdict, Verdict::Infeasible);
        assert!(g.required_cap.unwrap() > 1024.0);
        assert!(homogeneity_instance(2048, 2.0).is_err());
        assert!(homogeneity_instance(16, 1.0).is_err());
    }
}
