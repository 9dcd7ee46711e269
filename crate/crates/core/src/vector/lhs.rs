use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ensure_len, Error, Result};
use crate::model::{DiscreteFunction, Instance};
use crate::oracle::ordered_max;
use crate::rng;

/// `N` functions `f_{j,k}` on `Y_j` for every index `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VectorInput {
    terms: Vec<Vec<DiscreteFunction>>,
}

impl VectorInput {
    /// Shorter sequences are padded with zero functions.
    pub fn new(mut terms: Vec<Vec<DiscreteFunction>>) -> Result<Self> {
        let n = terms.iter().map(Vec::len).max().unwrap_or(0);
        for seq in &mut terms {
            let len = seq.first().map_or(0, DiscreteFunction::len);
            if seq.iter().any(|f| f.len() != len) {
                return Err(Error::InvalidField {
                    field: "vector input".into(),
                    reason: "functions of one index must share a length".into(),
                });
            }
            seq.resize(n, DiscreteFunction::zeros(len));
        }
        Ok(Self { terms })
    }

    /// Number of terms per index.
    pub fn n(&self) -> usize {
        self.terms.first().map_or(0, Vec::len)
    }

    pub fn d(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self, j: usize) -> &[DiscreteFunction] {
        &self.terms[j]
    }

    fn check(&self, inst: &Instance) -> Result<()> {
        ensure_len("vector input index count", inst.d(), self.d())?;
        for (j, seq) in self.terms.iter().enumerate() {
            for f in seq {
                f.check_on(inst.operators()[j].source(), &format!("vector input {j}"))?;
            }
        }
        Ok(())
    }
}

fn raw_vector_lhs(inst: &Instance, terms: &[Vec<Vec<f64>>]) -> f64 {
    let mu = inst.space_x().weights();
    let (p, theta) = (inst.profile().p(), inst.profile().theta());
    let sums: Vec<Vec<f64>> = terms
        .iter()
        .enumerate()
        .map(|(j, seq)| {
            let mut s = vec![0.0; mu.len()];
            for f in seq {
                for (acc, v) in s.iter_mut().zip(inst.operators()[j].apply_raw(f)) {
                    if v != 0.0 {
                        *acc += v.abs().powf(p[j]);
                    }
                }
            }
            s
        })
        .collect();
    (0..mu.len())
        .map(|x| {
            let mut prod = mu[x];
            for (s, t) in sums.iter().zip(theta) {
                if s[x] == 0.0 {
                    return 0.0;
                }
                prod *= s[x].powf(*t);
            }
            prod
        })
        .sum()
}

/// `sum_x mu(x) prod_j (sum_k |T_j f_{jk}(x)|^{p_j})^{theta_j}`.
pub fn vector_lhs(inst: &Instance, input: &VectorInput) -> Result<f64> {
    input.check(inst)?;
    let raw: Vec<Vec<Vec<f64>>> = input
        .terms
        .iter()
        .map(|seq| seq.iter().map(|f| f.values().to_vec()).collect())
        .collect();
    Ok(raw_vector_lhs(inst, &raw))
}

/// `prod_j (sum_k ||f_{jk}||_{r_j}^{p_j})^{theta_j}`.
fn raw_vector_rhs(inst: &Instance, terms: &[Vec<Vec<f64>>]) -> f64 {
    let (p, theta) = (inst.profile().p(), inst.profile().theta());
    terms
        .iter()
        .enumerate()
        .map(|(j, seq)| {
            let s: f64 = seq.iter().map(|f| inst.input_norm(j, f).powf(p[j])).sum();
            s.powf(theta[j])
        })
        .product()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VectorCheckReport {
    pub constant: f64,
    pub terms: usize,
    pub trials: u64,
    /// Largest `vector_lhs / prod_j (sum_k ||f_{jk}||^{p_j})^{theta_j}`.
    pub max_ratio: f64,
    pub violations: u64,
    /// Trials where `sum_k |T_j f_{jk}|^{p_j} <= (T_j F_j)^{p_j}` failed somewhere.
    pub majorant_violations: u64,
    pub witness: Option<VectorInput>,
}

impl VectorCheckReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.majorant_violations == 0
    }
}

fn sample_terms(inst: &Instance, n: usize, g: &mut impl Rng, k: u64) -> Vec<Vec<Vec<f64>>> {
    inst.operators()
        .iter()
        .map(|t| {
            (0..n)
                .map(|_| {
                    let scale = (g.random_range(-3.0..3.0f64)).exp();
                    (0..t.cols())
                        .map(|_| match k % 3 {
                            0 => scale * g.random::<f64>(),
                            1 if g.random_bool(0.5) => 0.0,
                            1 => scale * g.random::<f64>(),
                            _ => scale * (g.random::<f64>() - 0.25),
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Samples vector inputs with `terms` terms and checks the vector-valued
/// inequality at constant `b` (the scalar constant `A^{sum gamma}`), together
/// with the pointwise majorant `sum_k |T f_k|^p <= (T F)^p`,
/// `F = (sum_k |f_k|^p)^{1/p}`.
pub fn scalar_to_vector_check(inst: &Instance, b: f64, terms: usize, trials: u64, seed: u64) -> Result<VectorCheckReport> {
    let (p, r) = (inst.profile().p(), inst.profile().r());
    for j in 0..inst.d() {
        if !inst.operators()[j].is_positive() {
            return Err(Error::Inadmissible {
                index: j,
                condition: "the vector-valued upgrade needs positive operators".into(),
            });
        }
        if !(1.0 <= p[j] && p[j] <= r[j]) {
            return Err(Error::Inadmissible {
                index: j,
                condition: format!("the vector-valued upgrade needs 1 <= p_j <= r_j, got p_{j} = {}, r_{j} = {}", p[j], r[j]),
            });
        }
    }
    if !(b > 0.0 && b.is_finite()) || terms == 0 {
        return Err(Error::OutOfRange("constant must be > 0 and at least one term is required".into()));
    }
    let s = rng::derive(seed, 0x7EC7);
    let results: Vec<(f64, bool, bool)> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut g = rng::stream(s, k);
            let t = sample_terms(inst, terms, &mut g, k);
            let rhs = raw_vector_rhs(inst, &t);
            let ratio = if rhs > 0.0 { raw_vector_lhs(inst, &t) / rhs } else { 0.0 };
            let majorant_ok = (0..inst.d()).all(|j| {
                let op = &inst.operators()[j];
                let big_f: Vec<f64> = (0..op.cols())
                    .map(|y| t[j].iter().map(|f| f[y].abs().powf(p[j])).sum::<f64>().powf(1.0 / p[j]))
                    .collect();
                let tf = op.apply_raw(&big_f);
                let mut lhs = vec![0.0; tf.len()];
                for f in &t[j] {
                    for (acc, v) in lhs.iter_mut().zip(op.apply_raw(f)) {
                        *acc += v.abs().powf(p[j]);
                    }
                }
                lhs.iter().zip(&tf).all(|(l, m)| *l <= m.powf(p[j]) * (1.0 + 1e-12))
            });
            (ratio, ratio <= b * (1.0 + 1e-9), majorant_ok)
        })
        .collect();
    let violations = results.iter().filter(|r| !r.1).count() as u64;
    let majorant_violations = results.iter().filter(|r| !r.2).count() as u64;
    let (max_ratio, _) = results
        .iter()
        .enumerate()
        .map(|(k, r)| (r.0, k as u64))
        .fold((0.0, u64::MAX), ordered_max);
    let witness = results.iter().position(|r| !(r.1 && r.2)).map(|k| {
        let mut g = rng::stream(s, k as u64);
        let t = sample_terms(inst, terms, &mut g, k as u64);
        VectorInput {
            terms: t
                .into_iter()
                .map(|seq| seq.into_iter().map(DiscreteFunction::new).collect())
                .collect(),
        }
    });
    Ok(VectorCheckReport {
        constant: b,
        terms,
        trials,
        max_ratio,
        violations,
        majorant_violations,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AtomicMeasureSpace, ExponentProfile, OperatorMatrix};

    fn identities(p: f64) -> Instance {
        let x = AtomicMeasureSpace::new(vec![1.0, 1.0]).unwrap();
        let t = OperatorMatrix::identity(x.clone());
        let profile = ExponentProfile::from_theta(&[0.5, 0.5], vec![p, p], vec![p, p], None).unwrap();
        Instance::new(x, vec![t.clone(), t], profile, Some(1.0)).unwrap()
    }

    #[test]
    fn basis_terms() {
        let inst = identities(2.0);
        let e = |k| DiscreteFunction::basis(2, k);
        let vin = VectorInput::new(vec![vec![e(0), e(1)], vec![e(0), e(1)]]).unwrap();
        assert!((vector_lhs(&inst, &vin).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_term_matches_scalar() {
        let inst = identities(2.0);
        let f = vec![DiscreteFunction::new(vec![0.3, -1.2]), DiscreteFunction::new(vec![2.0, 0.7])];
        let vin = VectorInput::new(f.iter().map(|f| vec![f.clone()]).collect()).unwrap();
        let scalar = inst.evaluate_lhs(&f).unwrap();
        assert!((vector_lhs(&inst, &vin).unwrap() - scalar).abs() <= 1e-14 * scalar);
    }

    #[test]
    fn zero_terms_and_padding() {
        let inst = identities(2.0);
        let z = DiscreteFunction::zeros(2);
        let vin = VectorInput::new(vec![vec![z.clone(), z.clone()], vec![z]]).unwrap();
        assert_eq!(vin.n(), 2);
        assert_eq!(vector_lhs(&inst, &vin).unwrap(), 0.0);
    }

    #[test]
    fn identity_upgrade_holds() {
        let inst = identities(1.5);
        for n in [1, 4, 8] {
            let rep = scalar_to_vector_check(&inst, 1.0, n, 500, 3).unwrap();
            assert!(rep.passed(), "{rep:?}");
        }
    }
}
