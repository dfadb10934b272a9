use serde::Serialize;

use super::side_channel::{joint_basis_density, Basis};
use crate::error::{Error, Result};
use crate::matrix::{fidelity, DensityMatrix};
use crate::prep::PrepModel;

/// Imbalances below this are numerical noise and reported as 0.
pub const DELTA_FLOOR: f64 = 1e-14;

/// Fidelity and quantum-coin imbalance `(1 - sqrt F)/2` of the two basis
/// states.
pub fn coin_imbalance(rho_x: &DensityMatrix, rho_y: &DensityMatrix) -> Result<(f64, f64)> {
    let f = fidelity(rho_x, rho_y)?;
    let delta = (0.5 * (1.0 - f.sqrt())).clamp(0.0, 0.5);
    Ok((f, if delta < DELTA_FLOOR { 0.0 } else { delta }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseErrorBound {
    pub value: f64,
    /// Normalized imbalance exceeded 1/2; `value` is the trivial 1/2.
    pub vacuous: bool,
}

/// Single-photon phase-error bound from the bit error `e1_bit` and the
/// imbalance `delta` normalized by the single-photon yield `y1`.
pub fn phase_error_bound(delta: f64, y1: f64, e1_bit: f64) -> Result<PhaseErrorBound> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::param("delta", format!("must be >= 0, got {delta}")));
    }
    if !(y1 > 0.0 && y1 <= 1.0) {
        return Err(Error::param("y1", format!("must lie in (0, 1], got {y1}")));
    }
    if !(0.0..=0.5).contains(&e1_bit) {
        return Err(Error::param("e1_bit", format!("must lie in [0, 1/2], got {e1_bit}")));
    }
    let dp = delta / y1;
    if dp > 0.5 {
        return Ok(PhaseErrorBound {
            value: 0.5,
            vacuous: true,
        });
    }
    let e = e1_bit;
    let s = dp * (1.0 - dp);
    // sin^2 of (asin sqrt(e) + 2 asin sqrt(dp)); past pi/4 the bound is trivial
    let raw = e + 4.0 * s * (1.0 - 2.0 * e) + 4.0 * (1.0 - 2.0 * dp) * (s * e * (1.0 - e)).sqrt();
    let turned = (1.0 - e).sqrt() * (1.0 - 2.0 * dp) < e.sqrt() * 2.0 * s.sqrt();
    let value = if turned { 0.5 } else { raw.min(0.5) };
    Ok(PhaseErrorBound { value, vacuous: false })
}

/// Everything the coin argument produces for one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoinAnalysis {
    pub fidelity: f64,
    pub delta: f64,
    pub y1: f64,
    pub delta_prime: f64,
    pub e1_bit: f64,
    pub e1_phase: f64,
    pub vacuous: bool,
}

/// Builds the joint basis states for `prep` with side-channel intensity
/// `mu_eff` and evaluates the coin bound.
pub fn analyze(prep: &PrepModel, mu_eff: f64, y1: f64, e1_bit: f64) -> Result<CoinAnalysis> {
    let alice = prep.states()?;
    let x = joint_basis_density(&alice, mu_eff, Basis::X)?;
    let y = joint_basis_density(&alice, mu_eff, Basis::Y)?;
    let (fid, delta) = coin_imbalance(&x, &y)?;
    let bound = phase_error_bound(delta, y1, e1_bit)?;
    Ok(CoinAnalysis {
        fidelity: fid,
        delta,
        y1,
        delta_prime: delta / y1,
        e1_bit,
        e1_phase: bound.value,
        vacuous: bound.vacuous,
    })
}
