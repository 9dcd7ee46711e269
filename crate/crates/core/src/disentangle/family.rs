use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{ensure_len, Error, Result};
use crate::model::{lp_norm_raw, DiscreteFunction, Instance, OperatorMatrix};
use crate::rng;

/// One constraint `g = |T_j f|^{p_j} / ||f||_{r_j}^{p_j}`, stored sparsely.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintMember {
    /// Input that produced `g`; absent for constraints supplied directly.
    pub generator: Option<DiscreteFunction>,
    pub(crate) support: Vec<usize>,
    pub(crate) values: Vec<f64>,
}

impl ConstraintMember {
    pub fn from_generator(t: &OperatorMatrix, f: &DiscreteFunction, p: f64, r: f64) -> Result<Self> {
        f.check_on(t.source(), "constraint generator")?;
        let norm = lp_norm_raw(f.values(), r, t.source().weights(), None);
        if norm == 0.0 {
            return Err(Error::OutOfRange("constraint generator must be nonzero".into()));
        }
        let image = t.apply_raw(f.values());
        let mut m = Self::sparse(&image.iter().map(|v| (v.abs() / norm).powf(p)).collect::<Vec<_>>());
        m.generator = Some(f.clone());
        Ok(m)
    }

    /// A constraint given directly by its values on X.
    pub fn from_values(g: &DiscreteFunction) -> Result<Self> {
        if let Some((x, v)) = g.values().iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidField {
                field: format!("g[{x}]"),
                reason: format!("constraint functions must be finite and >= 0, got {v}"),
            });
        }
        Ok(Self::sparse(g.values()))
    }

    fn sparse(dense: &[f64]) -> Self {
        let support: Vec<usize> = (0..dense.len()).filter(|&x| dense[x] != 0.0).collect();
        let values = support.iter().map(|&x| dense[x]).collect();
        Self {
            generator: None,
            support,
            values,
        }
    }

    pub fn to_dense(&self, n: usize) -> DiscreteFunction {
        let mut v = vec![0.0; n];
        for (&x, &g) in self.support.iter().zip(&self.values) {
            v[x] = g;
        }
        DiscreteFunction::new(v)
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_empty()
    }

    /// `sum_x g(x) w(x) mu(x)`.
    pub(crate) fn integrate(&self, w: &[f64], mu: &[f64]) -> f64 {
        self.support.iter().zip(&self.values).map(|(&x, g)| g * w[x] * mu[x]).sum()
    }
}

/// Finite constraint sets `G_j`, one per index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintFamily {
    atoms: usize,
    members: Vec<Vec<ConstraintMember>>,
}

impl ConstraintFamily {
    pub fn empty(atoms: usize, d: usize) -> Self {
        Self {
            atoms,
            members: vec![Vec::new(); d],
        }
    }

    /// Families given directly by nonnegative functions on X.
    pub fn from_values(atoms: usize, per_index: &[Vec<DiscreteFunction>]) -> Result<Self> {
        let mut fam = Self::empty(atoms, per_index.len());
        for (j, gs) in per_index.iter().enumerate() {
            for g in gs {
                ensure_len("constraint function", atoms, g.len())?;
                fam.members[j].push(ConstraintMember::from_values(g)?);
            }
        }
        Ok(fam)
    }

    /// Canonical basis of every `Y_j` plus `random` generators per index
    /// (nonnegative for positive operators).
    pub fn seeded(inst: &Instance, random: usize, seed: u64) -> Self {
        let mut fam = Self::empty(inst.space_x().atom_count(), inst.d());
        let r = inst.profile().r();
        for (j, t) in inst.operators().iter().enumerate() {
            let m = t.cols();
            for y in 0..m {
                let _ = fam.add(inst, j, DiscreteFunction::basis(m, y));
            }
            let mut g = rng::stream(rng::derive(seed, 0xFA11), j as u64);
            for _ in 0..random {
                let f: Vec<f64> = (0..m)
                    .map(|_| {
                        if t.is_positive() {
                            g.random::<f64>()
                        } else {
                            g.sample::<f64, _>(StandardNormal)
                        }
                    })
                    .collect();
                let _ = fam.add(inst, j, DiscreteFunction::new(f));
            }
            if r[j].is_infinite() {
                let _ = fam.add(inst, j, DiscreteFunction::constant(m, 1.0));
            }
        }
        fam
    }

    /// Adds the constraint generated by `f`; returns false for zero constraints.
    pub fn add(&mut self, inst: &Instance, j: usize, f: DiscreteFunction) -> Result<bool> {
        let member = ConstraintMember::from_generator(&inst.operators()[j], &f, inst.profile().p()[j], inst.profile().r()[j])?;
        if member.is_zero() {
            return Ok(false);
        }
        self.members[j].push(member);
        Ok(true)
    }

    pub fn d(&self) -> usize {
        self.members.len()
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn members(&self, j: usize) -> &[ConstraintMember] {
        &self.members[j]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AtomicMeasureSpace, ExponentProfile};

    #[test]
    fn generator_reproduces_member() {
        let x = AtomicMeasureSpace::new(vec![1.0, 2.0]).unwrap();
        let y = AtomicMeasureSpace::new(vec![0.5, 1.5, 1.0]).unwrap();
        let t = OperatorMatrix::from_rows(x.clone(), y.clone(), &[vec![1.0, -2.0, 0.5], vec![0.0, 1.0, 3.0]], false).unwrap();
        let profile = ExponentProfile::new(vec![1.5], vec![1.5], vec![3.0], None).unwrap();
        let inst = Instance::new(x, vec![t.clone()], profile, None).unwrap();
        let fam = ConstraintFamily::seeded(&inst, 4, 9);
        assert_eq!(fam.counts(), vec![7]);
        for m in fam.members(0) {
            let f = m.generator.as_ref().unwrap();
            let norm = lp_norm_raw(f.values(), 3.0, y.weights(), None);
            let img = t.apply_raw(f.values());
            let dense = m.to_dense(2);
            for (a, b) in img.iter().zip(dense.values()) {
                let want = (a.abs() / norm).powf(1.5);
                assert!((want - b).abs() <= 1e-10 * want.max(1.0));
                assert!(*b >= 0.0);
            }
        }
    }

    #[test]
    fn raw_values_validated() {
        let ok = ConstraintFamily::from_values(1, &[vec![DiscreteFunction::new(vec![2.0])]]);
        assert!(ok.is_ok());
        let bad = ConstraintFamily::from_values(1, &[vec![DiscreteFunction::new(vec![-2.0])]]);
        assert!(bad.is_err());
    }
}
