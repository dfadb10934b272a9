use serde::{Deserialize, Serialize};

use crate::chernoff::{bisect_increasing, bound_value, ChernoffQuery};
use crate::error::{Error, Result};

/// Trojan light leaving Alice's device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrojanBudget {
    /// Injected mean photon number per pulse, when derived from hardware.
    pub input_intensity: Option<f64>,
    /// Round-trip isolation (dB), when derived from hardware.
    pub attenuation_db: Option<f64>,
    pub mu_out: f64,
    /// Failure probability per concentration bound; 0 means asymptotic.
    pub epsilon: f64,
    /// Finite-statistics effective intensity, once resolved.
    pub mu_out_eff: Option<f64>,
}

impl TrojanBudget {
    pub fn direct(mu_out: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&mu_out) {
            return Err(Error::param("mu_out", format!("must lie in [0, 1), got {mu_out}")));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::param("epsilon", format!("must lie in [0, 1), got {epsilon}")));
        }
        Ok(Self {
            input_intensity: None,
            attenuation_db: None,
            mu_out,
            epsilon,
            mu_out_eff: None,
        })
    }

    /// `mu_out = 10^(-attenuation_db/10) * input_intensity`.
    pub fn from_hardware(input_intensity: f64, attenuation_db: f64, epsilon: f64) -> Result<Self> {
        if !(input_intensity >= 0.0 && input_intensity.is_finite()) {
            return Err(Error::param(
                "input_intensity",
                format!("must be >= 0, got {input_intensity}"),
            ));
        }
        if !attenuation_db.is_finite() {
            return Err(Error::param("attenuation_db", "must be finite"));
        }
        let mu_out = 10f64.powf(-attenuation_db / 10.0) * input_intensity;
        let mut budget = Self::direct(mu_out, epsilon)?;
        budget.input_intensity = Some(input_intensity);
        budget.attenuation_db = Some(attenuation_db);
        Ok(budget)
    }

    /// Resolves `mu_out_eff` for `m1_lower` single-photon events.
    pub fn resolve(mut self, m1_lower: f64) -> Result<Self> {
        self.mu_out_eff = Some(effective_mu_out(m1_lower, self.mu_out, self.epsilon)?);
        Ok(self)
    }
}

/// Effective intensity `mu'` solving
/// `lower(M mu') = upper(M mu)` with `M = m1_lower`, i.e. the smallest
/// intensity whose pessimistic count still covers the optimistic count at
/// `mu`. `epsilon = 0` gives `mu' = mu`.
pub fn effective_mu_out(m1_lower: f64, mu_out: f64, epsilon: f64) -> Result<f64> {
    if !(m1_lower > 0.0 && m1_lower.is_finite()) {
        return Err(Error::param("m1_lower", format!("must be > 0, got {m1_lower}")));
    }
    if !(0.0..1.0).contains(&mu_out) {
        return Err(Error::param("mu_out", format!("must lie in [0, 1), got {mu_out}")));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::param("epsilon", format!("must lie in [0, 1), got {epsilon}")));
    }
    if epsilon == 0.0 || mu_out == 0.0 {
        return Ok(mu_out);
    }
    let rhs = bound_value(&ChernoffQuery::upper(m1_lower * mu_out, epsilon)?);
    let lhs = |mu: f64| -> f64 {
        let q = ChernoffQuery::lower(m1_lower * mu, epsilon).expect("positive expectation");
        bound_value(&q)
    };
    if lhs(1.0) < rhs {
        return Err(Error::NoSolutionBelowOne);
    }
    Ok(bisect_increasing(|mu| lhs(mu) - rhs, mu_out, 1.0))
}
