//! Instances and their document format.
//!
//! An instance document is UTF-8 JSON:
//!
//! ```json
//! {
//!   "measure_x": [0.5, 0.5],
//!   "operators": [
//!     { "matrix": [[1, 0], [0, 1]], "measure_y": [0.5, 0.5], "positive": true }
//!   ],
//!   "exponents": { "gamma": [1], "p": [1], "r": ["inf"], "q": null },
//!   "known_constant": 1.0
//! }
//! ```
//!
//! Exponents `r_j` may be the string `"inf"`. Every validation error names the
//! offending field by its path in the document.

use serde::{Deserialize, Serialize};

use super::measure::{lp_norm_raw, AtomicMeasureSpace, DiscreteFunction};
use super::operator::OperatorMatrix;
use super::profile::ExponentProfile;
use crate::error::{ensure_len, Error, Result};

/// A multilinear inequality on a finite atomic space X.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    space_x: AtomicMeasureSpace,
    operators: Vec<OperatorMatrix>,
    profile: ExponentProfile,
    known_constant: Option<f64>,
}

impl Instance {
    pub fn new(
        space_x: AtomicMeasureSpace,
        operators: Vec<OperatorMatrix>,
        profile: ExponentProfile,
        known_constant: Option<f64>,
    ) -> Result<Self> {
        ensure_len("instance operators vs exponent profile", profile.d(), operators.len())?;
        for (j, op) in operators.iter().enumerate() {
            if op.target() != &space_x {
                return Err(Error::InvalidField {
                    field: format!("operators[{j}]"),
                    reason: "operator target differs from measure_x".into(),
                });
            }
            if profile.r()[j].is_infinite() && !op.is_positive() {
                return Err(Error::InvalidField {
                    field: format!("exponents.r[{j}]"),
                    reason: "r = inf is only allowed for operators flagged positive".into(),
                });
            }
        }
        if let Some(a) = known_constant {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidField {
                    field: "known_constant".into(),
                    reason: format!("must be finite and > 0, got {a}"),
                });
            }
        }
        Ok(Self {
            space_x,
            operators,
            profile,
            known_constant,
        })
    }

    pub fn space_x(&self) -> &AtomicMeasureSpace {
        &self.space_x
    }

    pub fn operators(&self) -> &[OperatorMatrix] {
        &self.operators
    }

    pub fn profile(&self) -> &ExponentProfile {
        &self.profile
    }

    pub fn known_constant(&self) -> Option<f64> {
        self.known_constant
    }

    pub fn d(&self) -> usize {
        self.operators.len()
    }

    pub fn all_positive(&self) -> bool {
        self.operators.iter().all(|t| t.is_positive())
    }

    pub fn with_known_constant(mut self, a: Option<f64>) -> Result<Self> {
        if let Some(a) = a {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::OutOfRange(format!("constant must be > 0, got {a}")));
            }
        }
        self.known_constant = a;
        Ok(self)
    }

    pub fn with_profile(&self, profile: ExponentProfile) -> Result<Self> {
        Self::new(self.space_x.clone(), self.operators.clone(), profile, self.known_constant)
    }

    pub(crate) fn check_inputs(&self, fs: &[DiscreteFunction]) -> Result<()> {
        ensure_len("number of input functions", self.d(), fs.len())?;
        for (j, (f, t)) in fs.iter().zip(&self.operators).enumerate() {
            f.check_on(t.source(), &format!("input function {j}"))?;
        }
        Ok(())
    }

    /// `sum_x mu(x) prod_j |T_j f_j(x)|^{gamma_j}`.
    pub fn evaluate_lhs(&self, fs: &[DiscreteFunction]) -> Result<f64> {
        self.check_inputs(fs)?;
        let images: Vec<Vec<f64>> = fs
            .iter()
            .zip(&self.operators)
            .map(|(f, t)| t.apply_raw(f.values()))
            .collect();
        Ok(lhs_from_images(self.space_x.weights(), &images, self.profile.gamma()))
    }

    /// `prod_j ||f_j||_{r_j}^{gamma_j}` with norms taken on each Y_j.
    pub fn norm_product(&self, fs: &[DiscreteFunction]) -> Result<f64> {
        self.check_inputs(fs)?;
        Ok(fs
            .iter()
            .enumerate()
            .map(|(j, f)| self.input_norm(j, f.values()).powf(self.profile.gamma()[j]))
            .product())
    }

    /// Left side divided by the norm product; `A^{sum gamma}` at the extremisers.
    pub fn ratio(&self, fs: &[DiscreteFunction]) -> Result<f64> {
        let lhs = self.evaluate_lhs(fs)?;
        let den = self.norm_product(fs)?;
        Ok(if den > 0.0 { lhs / den } else { 0.0 })
    }

    pub(crate) fn input_norm(&self, j: usize, f: &[f64]) -> f64 {
        lp_norm_raw(f, self.profile.r()[j], self.operators[j].source().weights(), None)
    }

    pub fn to_document(&self) -> InstanceDocument {
        InstanceDocument {
            measure_x: self.space_x.weights().to_vec(),
            operators: self
                .operators
                .iter()
                .map(|t| OperatorDocument {
                    matrix: t.to_rows(),
                    measure_y: t.source().weights().to_vec(),
                    positive: t.is_positive(),
                })
                .collect(),
            exponents: ExponentsDocument {
                gamma: self.profile.gamma().to_vec(),
                p: self.profile.p().to_vec(),
                r: self.profile.r().iter().map(|&r| ExponentValue::from(r)).collect(),
                q: self.profile.q().map(ExponentValue::from),
            },
            known_constant: self.known_constant,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("instance documents serialise")
    }
}

pub(crate) fn lhs_from_images(mu: &[f64], images: &[Vec<f64>], gamma: &[f64]) -> f64 {
    mu.iter()
        .enumerate()
        .map(|(x, m)| {
            let mut prod = *m;
            for (img, g) in images.iter().zip(gamma) {
                let v = img[x].abs();
                if v == 0.0 {
                    return 0.0;
                }
                prod *= v.powf(*g);
            }
            prod
        })
        .sum()
}

/// A number, or `"inf"` for an infinite exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExponentValue {
    Number(f64),
    Named(NamedExponent),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NamedExponent {
    #[serde(rename = "inf", alias = "infinity", alias = "Infinity", alias = "∞")]
    Infinity,
}

impl From<f64> for ExponentValue {
    fn from(v: f64) -> Self {
        if v.is_infinite() && v > 0.0 {
            ExponentValue::Named(NamedExponent::Infinity)
        } else {
            ExponentValue::Number(v)
        }
    }
}

impl ExponentValue {
    pub fn value(self) -> f64 {
        match self {
            ExponentValue::Number(v) => v,
            ExponentValue::Named(NamedExponent::Infinity) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorDocument {
    pub matrix: Vec<Vec<f64>>,
    pub measure_y: Vec<f64>,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentsDocument {
    pub gamma: Vec<f64>,
    pub p: Vec<f64>,
    pub r: Vec<ExponentValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<ExponentValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub measure_x: Vec<f64>,
    pub operators: Vec<OperatorDocument>,
    pub exponents: ExponentsDocument,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_constant: Option<f64>,
}

/// Parses and fully validates an instance document.
pub fn parse_instance(document: &str) -> Result<Instance> {
    let doc: InstanceDocument = serde_json::from_str(document)?;
    Instance::try_from(doc)
}

fn measure(field: &str, weights: &[f64]) -> Result<AtomicMeasureSpace> {
    if weights.is_empty() {
        return Err(Error::InvalidField {
            field: field.to_string(),
            reason: "measure space has no atoms".into(),
        });
    }
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidField {
            field: format!("{field}[{i}]"),
            reason: format!("measure weights must be finite and > 0, got {w}"),
        });
    }
    AtomicMeasureSpace::new(weights.to_vec())
}

impl TryFrom<InstanceDocument> for Instance {
    type Error = Error;

    fn try_from(doc: InstanceDocument) -> Result<Self> {
        let space_x = measure("measure_x", &doc.measure_x)?;
        let n = space_x.atom_count();
        let mut operators = Vec::with_capacity(doc.operators.len());
        for (j, od) in doc.operators.iter().enumerate() {
            let source = measure(&format!("operators[{j}].measure_y"), &od.measure_y)?;
            let m = source.atom_count();
            if od.matrix.len() != n {
                return Err(Error::InvalidField {
                    field: format!("operators[{j}].matrix"),
                    reason: format!("expected {n} rows (atoms of X), found {}", od.matrix.len()),
                });
            }
            for (x, row) in od.matrix.iter().enumerate() {
                if row.len() != m {
                    return Err(Error::InvalidField {
                        field: format!("operators[{j}].matrix[{x}]"),
                        reason: format!("expected {m} columns (atoms of Y_{j}), found {}", row.len()),
                    });
                }
                for (y, &v) in row.iter().enumerate() {
                    if od.positive && v < 0.0 {
                        return Err(Error::Positivity {
                            field: format!("operators[{j}].matrix[{x}][{y}]"),
                            value: v,
                        });
                    }
                }
            }
            operators.push(OperatorMatrix::from_rows(space_x.clone(), source, &od.matrix, od.positive)?);
        }
        let e = &doc.exponents;
        let d = e.gamma.len();
        if operators.len() != d {
            return Err(Error::InvalidField {
                field: "operators".into(),
                reason: format!("expected {d} operators (length of exponents.gamma), found {}", operators.len()),
            });
        }
        let r: Vec<f64> = e.r.iter().map(|v| v.value()).collect();
        let profile = ExponentProfile::new(e.gamma.clone(), e.p.clone(), r, e.q.map(|q| q.value()))?;
        Instance::new(space_x, operators, profile, doc.known_constant)
    }
}
