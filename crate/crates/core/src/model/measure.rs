use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

/// A finite measure space: atoms with strictly positive masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AtomicMeasureSpace {
    weights: Vec<f64>,
}

impl AtomicMeasureSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptySpace);
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidField {
                    field: format!("weights[{i}]"),
                    reason: format!("atom mass must be finite and > 0, got {w}"),
                });
            }
        }
        Ok(Self { weights })
    }

    /// `n` atoms of mass `mass` each.
    pub fn uniform(n: usize, mass: f64) -> Result<Self> {
        Self::new(vec![mass; n])
    }

    /// `n` atoms of mass `1/n`.
    pub fn probability(n: usize) -> Result<Self> {
        Self::uniform(n, 1.0 / n as f64)
    }

    pub fn atom_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

impl TryFrom<Vec<f64>> for AtomicMeasureSpace {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights)
    }
}

impl From<AtomicMeasureSpace> for Vec<f64> {
    fn from(space: AtomicMeasureSpace) -> Self {
        space.weights
    }
}

/// A real function on the atoms of some space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiscreteFunction {
    values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self::new(vec![value; n])
    }

    /// Indicator of atom `k` among `n`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut values = vec![0.0; n];
        values[k] = 1.0;
        Self::new(values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }

    /// Checks that the function lives on `space`.
    pub fn check_on(&self, space: &AtomicMeasureSpace, context: &str) -> Result<()> {
        ensure_len(context, space.atom_count(), self.len())
    }
}

impl From<Vec<f64>> for DiscreteFunction {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

/// `(sum_x |f(x)|^p w(x) mu(x))^{1/p}`, or the essential supremum when `p` is
/// infinite. Exponents below one use the same formula (a quasi-norm).
pub fn lp_norm(
    f: &DiscreteFunction,
    p: f64,
    space: &AtomicMeasureSpace,
    weight: Option<&DiscreteFunction>,
) -> Result<f64> {
    f.check_on(space, "lp_norm: function")?;
    if let Some(w) = weight {
        w.check_on(space, "lp_norm: weight")?;
        if let Some((i, v)) = w.values().iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::InvalidField {
                field: format!("weight[{i}]"),
                reason: format!("weights must be nonnegative, got {v}"),
            });
        }
    }
    if !(p > 0.0) {
        return Err(Error::OutOfRange(format!("lp_norm exponent must be > 0, got {p}")));
    }
    Ok(lp_norm_raw(f.values(), p, space.weights(), weight.map(|w| w.values())))
}

/// Unchecked slice form of [`lp_norm`].
pub(crate) fn lp_norm_raw(f: &[f64], p: f64, mu: &[f64], weight: Option<&[f64]>) -> f64 {
    let w = |i: usize| weight.map_or(1.0, |w| w[i]) * mu[i];
    if p.is_infinite() {
        // 0 * inf = 0: atoms of zero effective mass do not count.
        return f
            .iter()
            .enumerate()
            .filter(|&(i, _)| w(i) > 0.0)
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max);
    }
    let sum: f64 = f
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let a = v.abs();
            if a == 0.0 {
                0.0
            } else {
                a.powf(p) * w(i)
            }
        })
        .sum();
    sum.powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn space(w: &[f64]) -> AtomicMeasureSpace {
        AtomicMeasureSpace::new(w.to_vec()).unwrap()
    }

    #[test]
    fn normalised_two_atoms() {
        let f = DiscreteFunction::new(vec![1.0, 1.0]);
        assert_relative_eq!(lp_norm(&f, 2.0, &space(&[0.5, 0.5]), None).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn sup_norm() {
        let f = DiscreteFunction::new(vec![3.0, 4.0]);
        assert_eq!(lp_norm(&f, f64::INFINITY, &space(&[1.0, 1.0]), None).unwrap(), 4.0);
    }

    #[test]
    fn sup_norm_ignores_zero_weight_atoms() {
        let f = DiscreteFunction::new(vec![3.0, 4.0]);
        let w = DiscreteFunction::new(vec![1.0, 0.0]);
        assert_eq!(lp_norm(&f, f64::INFINITY, &space(&[1.0, 1.0]), Some(&w)).unwrap(), 3.0);
    }

    #[test]
    fn quasi_norm_half() {
        // (1^{1/2} + 2^{1/2})^2
        let f = DiscreteFunction::new(vec![1.0, 2.0]);
        let v = lp_norm(&f, 0.5, &space(&[1.0, 1.0]), None).unwrap();
        assert_relative_eq!(v, (1.0 + 2f64.sqrt()).powi(2), max_relative = 1e-14);
        assert_relative_eq!(v, 5.828_427_124_746_19, max_relative = 1e-14);
    }

    #[test]
    fn weighted_case() {
        let f = DiscreteFunction::new(vec![1.0, 2.0]);
        let w = DiscreteFunction::new(vec![2.0, 0.25]);
        let v = lp_norm(&f, 2.0, &space(&[1.0, 1.0]), Some(&w)).unwrap();
        assert_relative_eq!(v, (2.0f64 + 1.0).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(AtomicMeasureSpace::new(vec![]), Err(Error::EmptySpace)));
        assert!(AtomicMeasureSpace::new(vec![1.0, -1.0]).is_err());
        let f = DiscreteFunction::new(vec![1.0]);
        assert!(matches!(
            lp_norm(&f, 2.0, &space(&[1.0, 1.0]), None),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(lp_norm(&DiscreteFunction::new(vec![1.0, 1.0]), 0.0, &space(&[1.0, 1.0]), None).is_err());
    }

    proptest! {
        #[test]
        fn l1_is_plain_sum(vals in prop::collection::vec(-10.0f64..10.0, 1..8), seed in 0.1f64..3.0) {
            let mu: Vec<f64> = (0..vals.len()).map(|i| seed + i as f64 * 0.3).collect();
            let s = space(&mu);
            let f = DiscreteFunction::new(vals.clone());
            let direct: f64 = vals.iter().zip(&mu).map(|(v, m)| v.abs() * m).sum();
            let one = DiscreteFunction::constant(vals.len(), 1.0);
            prop_assert!((lp_norm(&f, 1.0, &s, Some(&one)).unwrap() - direct).abs() <= 1e-12 * (1.0 + direct));
        }

        #[test]
        fn triangle_and_p_subadditivity(
            a in prop::collection::vec(-5.0f64..5.0, 4),
            b in prop::collection::vec(-5.0f64..5.0, 4),
            p in 0.2f64..6.0,
        ) {
            let s = space(&[0.5, 1.0, 1.5, 2.0]);
            let fa = DiscreteFunction::new(a.clone());
            let fb = DiscreteFunction::new(b.clone());
            let fs = DiscreteFunction::new(a.iter().zip(&b).map(|(x, y)| x + y).collect());
            let na = lp_norm(&fa, p, &s, None).unwrap();
            let nb = lp_norm(&fb, p, &s, None).unwrap();
            let ns = lp_norm(&fs, p, &s, None).unwrap();
            if p >= 1.0 {
                prop_assert!(ns <= na + nb + 1e-12 * (1.0 + na + nb));
            } else {
                let (pa, pb, ps) = (na.powf(p), nb.powf(p), ns.powf(p));
                prop_assert!(ps <= pa + pb + 1e-12 * (1.0 + pa + pb));
            }
        }
    }
}
