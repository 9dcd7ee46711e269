use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::measure::{AtomicMeasureSpace, DiscreteFunction};
use super::profile::ExponentProfile;
use crate::error::{ensure_len, Error, Result};

/// Weights `phi_j` on X witnessing a disentanglement with constant `constant`.
///
/// `slacks` carries named residuals. The keys `cap` and `bound[j]` (the
/// per-index constant `A cap^{1/p_j}`) are read back by the verifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub phi: Vec<DiscreteFunction>,
    pub constant: f64,
    #[serde(default)]
    pub slacks: BTreeMap<String, f64>,
}

impl Certificate {
    pub fn new(phi: Vec<DiscreteFunction>, constant: f64) -> Self {
        Self {
            phi,
            constant,
            slacks: BTreeMap::new(),
        }
    }

    /// Constant in `(int |T_j f|^{p_j} phi_j)^{1/p_j} <= bound ||f||`.
    pub fn bound(&self, j: usize, p_j: f64) -> f64 {
        if let Some(b) = self.slacks.get(&format!("bound[{j}]")) {
            return *b;
        }
        match self.slacks.get("cap") {
            Some(cap) => self.constant * cap.powf(1.0 / p_j),
            None => self.constant,
        }
    }

    pub fn check(&self, profile: &ExponentProfile, space: &AtomicMeasureSpace) -> Result<()> {
        ensure_len("certificate phi count", profile.d(), self.phi.len())?;
        for (j, phi) in self.phi.iter().enumerate() {
            phi.check_on(space, &format!("certificate phi[{j}]"))?;
            if let Some((x, v)) = phi.values().iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
                return Err(Error::InvalidField {
                    field: format!("phi[{j}][{x}]"),
                    reason: format!("weights must be nonnegative, got {v}"),
                });
            }
        }
        if !(self.constant.is_finite() && self.constant > 0.0) {
            return Err(Error::InvalidField {
                field: "constant".into(),
                reason: format!("must be finite and > 0, got {}", self.constant),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificates serialise")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `prod_j phi_j(x)^{theta_j}` at every atom, with `0^0 = 1`.
pub fn geometric_means(phi: &[DiscreteFunction], theta: &[f64]) -> Vec<f64> {
    let n = phi.first().map_or(0, |p| p.len());
    (0..n)
        .map(|x| {
            phi.iter()
                .zip(theta)
                .map(|(p, &t)| if t == 0.0 { 1.0 } else { p.values()[x].powf(t) })
                .product()
        })
        .collect()
}

/// Smallest value over atoms of `prod_j phi_j(x)^{theta_j}`.
pub fn geometric_mean_floor(cert: &Certificate, profile: &ExponentProfile, space: &AtomicMeasureSpace) -> Result<f64> {
    cert.check(profile, space)?;
    Ok(geometric_means(&cert.phi, profile.theta())
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}
