use serde::Serialize;

use crate::error::{ensure_len, Error, Result};

/// Absolute tolerance on `sum_j gamma_j / p_j = 1`.
pub const HOMOGENEITY_TOL: f64 = 1e-12;

/// Exponents `(gamma_j, p_j, r_j)` together with the derived weights
/// `theta_j = gamma_j / p_j` and the optional outer exponent `q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentProfile {
    gamma: Vec<f64>,
    p: Vec<f64>,
    r: Vec<f64>,
    theta: Vec<f64>,
    alpha: Option<Vec<f64>>,
    q: Option<f64>,
}

impl ExponentProfile {
    pub fn new(gamma: Vec<f64>, p: Vec<f64>, r: Vec<f64>, q: Option<f64>) -> Result<Self> {
        let d = gamma.len();
        if d == 0 {
            return Err(Error::InvalidField {
                field: "exponents.gamma".into(),
                reason: "at least one index is required".into(),
            });
        }
        ensure_len("exponents.p", d, p.len())?;
        ensure_len("exponents.r", d, r.len())?;
        for j in 0..d {
            if !(gamma[j].is_finite() && gamma[j] > 0.0) {
                return Err(field_err(format!("exponents.gamma[{j}]"), format!("must be finite and > 0, got {}", gamma[j])));
            }
            if !(p[j].is_finite() && p[j] > 0.0) {
                return Err(field_err(format!("exponents.p[{j}]"), format!("must be finite and > 0, got {}", p[j])));
            }
            if !(r[j] > 0.0) {
                return Err(field_err(format!("exponents.r[{j}]"), format!("must be > 0 or inf, got {}", r[j])));
            }
        }
        if let Some(q) = q {
            if !(q > 0.0) {
                return Err(field_err("exponents.q".into(), format!("must be > 0 or inf, got {q}")));
            }
        }
        let theta: Vec<f64> = gamma.iter().zip(&p).map(|(g, p)| g / p).collect();
        let sum: f64 = theta.iter().sum();
        let deviation = (sum - 1.0).abs();
        if deviation > HOMOGENEITY_TOL {
            return Err(Error::Homogeneity { sum, deviation });
        }
        let alpha = q.filter(|q| q.is_finite()).map(|q| gamma.iter().map(|g| g / q).collect());
        Ok(Self {
            gamma,
            p,
            r,
            theta,
            alpha,
            q,
        })
    }

    /// Builds the profile from `theta` directly, with `gamma_j = theta_j p_j`.
    pub fn from_theta(theta: &[f64], p: Vec<f64>, r: Vec<f64>, q: Option<f64>) -> Result<Self> {
        ensure_len("exponents.p", theta.len(), p.len())?;
        let gamma = theta.iter().zip(&p).map(|(t, p)| t * p).collect();
        Self::new(gamma, p, r, q)
    }

    pub fn d(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn alpha(&self) -> Option<&[f64]> {
        self.alpha.as_deref()
    }

    pub fn q(&self) -> Option<f64> {
        self.q
    }

    pub fn gamma_sum(&self) -> f64 {
        self.gamma.iter().sum()
    }

    pub fn with_q(&self, q: Option<f64>) -> Result<Self> {
        Self::new(self.gamma.clone(), self.p.clone(), self.r.clone(), q)
    }
}

fn field_err(field: String, reason: String) -> Error {
    Error::InvalidField { field, reason }
}
