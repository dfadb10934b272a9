//! Alice's four polarization states.
//!
//! A state on the Bloch sphere is `cos(theta/2)|H> + e^{i phi} sin(theta/2)|V>`.
//! The protocol puts all four states on the equator (`theta = pi/2`) with
//! relative phases 0, pi (basis X') and pi/2, 3pi/2 (basis Y'), rotated by a
//! common offset `phi0`. Imperfect preparation replaces each pure state by its
//! average over a distribution of angles.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, DensityMatrix};
use crate::quadrature::gauss_legendre_on;

/// Relative phases of states 1..=4.
pub const IDEAL_OFFSETS: [f64; 4] = [0.0, PI, FRAC_PI_2, 3.0 * FRAC_PI_2];

/// Largest accepted Gaussian width (rad); the analytic average relies on the
/// distribution sitting well inside the angle ranges.
pub const MAX_SIGMA: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochAngles {
    phi: f64,
    theta: f64,
}

impl BlochAngles {
    /// `phi` is reduced into [0, 2pi); `theta` outside [0, pi] is rejected.
    pub fn new(phi: f64, theta: f64) -> Result<Self> {
        if !phi.is_finite() {
            return Err(Error::param("phi", format!("not finite: {phi}")));
        }
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::param("theta", format!("must lie in [0, pi], got {theta}")));
        }
        let mut phi = phi.rem_euclid(TAU);
        if phi >= TAU {
            phi = 0.0;
        }
        Ok(Self { phi, theta })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

fn bloch_matrix(phi: f64, theta: f64) -> ComplexMatrix {
    let (s, c) = (0.5 * theta).sin_cos();
    let v = [Complex64::new(c, 0.0), Complex64::from_polar(s, phi)];
    ComplexMatrix::projector(&v)
}

/// Pure state |psi(phi, theta)><psi(phi, theta)|.
pub fn bloch_state(angles: BlochAngles) -> DensityMatrix {
    DensityMatrix::new(bloch_matrix(angles.phi, angles.theta)).expect("projector is a valid state")
}

fn check_index(index: usize) -> Result<usize> {
    if (1..=4).contains(&index) {
        Ok(index - 1)
    } else {
        Err(Error::BadIndex(index))
    }
}

/// Perfect preparation: equatorial states with phases `phi0 + IDEAL_OFFSETS`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdealPrep {
    #[serde(default)]
    pub phi0: f64,
}

impl IdealPrep {
    pub fn new(phi0: f64) -> Self {
        Self { phi0 }
    }
}

pub fn ideal_state(prep: &IdealPrep, index: usize) -> Result<DensityMatrix> {
    let i = check_index(index)?;
    Ok(bloch_state(BlochAngles::new(prep.phi0 + IDEAL_OFFSETS[i], FRAC_PI_2)?))
}

/// Independent Gaussian fluctuations of the phase (per state) and of the
/// polar angle (shared).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPrepModel {
    pub phi_mean: [f64; 4],
    pub phi_sigma: [f64; 4],
    pub theta_mean: f64,
    pub theta_sigma: f64,
}

impl Default for GaussianPrepModel {
    fn default() -> Self {
        Self::around_ideal(0.0, [0.05; 4], 0.05)
    }
}

impl GaussianPrepModel {
    pub fn new(phi_mean: [f64; 4], phi_sigma: [f64; 4], theta_mean: f64, theta_sigma: f64) -> Result<Self> {
        let model = Self {
            phi_mean,
            phi_sigma,
            theta_mean,
            theta_sigma,
        };
        model.validate()?;
        Ok(model)
    }

    /// Means at the ideal protocol angles, `theta_mean = pi/2`.
    pub fn around_ideal(phi0: f64, phi_sigma: [f64; 4], theta_sigma: f64) -> Self {
        Self {
            phi_mean: IDEAL_OFFSETS.map(|o| phi0 + o),
            phi_sigma,
            theta_mean: FRAC_PI_2,
            theta_sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &s) in self.phi_sigma.iter().enumerate() {
            if !(0.0..=MAX_SIGMA).contains(&s) {
                return Err(Error::param(
                    "phi_sigma",
                    format!("entry {} = {s} outside [0, {MAX_SIGMA}]", i + 1),
                ));
            }
        }
        if !(0.0..=MAX_SIGMA).contains(&self.theta_sigma) {
            return Err(Error::param(
                "theta_sigma",
                format!("{} outside [0, {MAX_SIGMA}]", self.theta_sigma),
            ));
        }
        if !(0.0..=PI).contains(&self.theta_mean) {
            return Err(Error::param(
                "theta_mean",
                format!("{} outside [0, pi]", self.theta_mean),
            ));
        }
        if self.phi_mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::param("phi_mean", "entries must be finite"));
        }
        Ok(())
    }

    /// Angle distribution of state `index` (1..=4).
    pub fn density(&self, index: usize) -> Result<GaussianAngles> {
        let i = check_index(index)?;
        Ok(GaussianAngles {
            phi_mean: self.phi_mean[i],
            phi_sigma: self.phi_sigma[i],
            theta_mean: self.theta_mean,
            theta_sigma: self.theta_sigma,
        })
    }
}

/// Closed-form average of state `index` under the Gaussian model (the
/// truncation of the distribution to the angle ranges is neglected).
pub fn gaussian_state_analytic(model: &GaussianPrepModel, index: usize) -> Result<DensityMatrix> {
    model.validate()?;
    let i = check_index(index)?;
    let st2 = model.theta_sigma * model.theta_sigma;
    let sp2 = model.phi_sigma[i] * model.phi_sigma[i];
    let z = (-0.5 * st2).exp() * model.theta_mean.cos();
    let off = (-0.5 * (sp2 + st2)).exp() * model.theta_mean.sin() * 0.5;
    let phase = Complex64::from_polar(off, -model.phi_mean[i]);
    let m = ComplexMatrix::from_vec(
        2,
        vec![
            Complex64::new(0.5 * (1.0 + z), 0.0),
            phase,
            phase.conj(),
            Complex64::new(0.5 * (1.0 - z), 0.0),
        ],
    )?;
    DensityMatrix::new(m)
}

/// A probability density over Bloch angles together with the rectangle it
/// is integrated over.
pub trait AngleDensity {
    /// Unnormalized density; the quadrature normalizes over the window.
    fn density(&self, phi: f64, theta: f64) -> f64;
    fn phi_window(&self, window_sigmas: f64) -> (f64, f64);
    fn theta_window(&self, window_sigmas: f64) -> (f64, f64);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianAngles {
    pub phi_mean: f64,
    pub phi_sigma: f64,
    pub theta_mean: f64,
    pub theta_sigma: f64,
}

fn gaussian(x: f64, mean: f64, sigma: f64) -> f64 {
    let u = (x - mean) / sigma;
    (-0.5 * u * u).exp() / (sigma * (TAU).sqrt())
}

impl AngleDensity for GaussianAngles {
    fn density(&self, phi: f64, theta: f64) -> f64 {
        gaussian(phi, self.phi_mean, self.phi_sigma) * gaussian(theta, self.theta_mean, self.theta_sigma)
    }

    // The integrand is 2pi-periodic in phi, so any full period is an
    // equivalent integration range; the one centred on the mean keeps the
    // peak away from the edges.
    fn phi_window(&self, window_sigmas: f64) -> (f64, f64) {
        let half = (window_sigmas * self.phi_sigma).min(PI);
        (self.phi_mean - half, self.phi_mean + half)
    }

    fn theta_window(&self, window_sigmas: f64) -> (f64, f64) {
        let half = window_sigmas * self.theta_sigma;
        ((self.theta_mean - half).max(0.0), (self.theta_mean + half).min(PI))
    }
}

/// Resolution control for the quadrature oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Starting Gauss-Legendre points per axis (at least 200).
    pub initial_points: usize,
    /// Doubling stops with an error beyond this many points per axis.
    pub max_points: usize,
    /// Required max entrywise change between successive doublings.
    pub tolerance: f64,
    /// Half-width of the integration window in standard deviations.
    pub window_sigmas: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            initial_points: 200,
            max_points: 3200,
            tolerance: 1e-8,
            window_sigmas: 12.0,
        }
    }
}

/// Normalized average of |psi><psi| on an n x n tensor-product rule.
fn tensor_average(density: &impl AngleDensity, n: usize, window_sigmas: f64) -> ComplexMatrix {
    let (pa, pb) = density.phi_window(window_sigmas);
    let (ta, tb) = density.theta_window(window_sigmas);
    let phi_rule = gauss_legendre_on(n, pa, pb);
    let theta_rule = gauss_legendre_on(n, ta, tb);
    let theta_terms: Vec<(f64, f64, f64, f64, f64)> = theta_rule
        .iter()
        .map(|&(t, w)| {
            let (s, c) = (0.5 * t).sin_cos();
            (t, w, c * c, s * s, s * c)
        })
        .collect();

    let mut norm = 0.0;
    let mut hh = 0.0;
    let mut vv = 0.0;
    let mut hv = Complex64::new(0.0, 0.0);
    for &(phi, wp) in &phi_rule {
        let rot = Complex64::from_polar(1.0, -phi);
        let mut row_norm = 0.0;
        let mut row_hh = 0.0;
        let mut row_vv = 0.0;
        let mut row_hv = 0.0;
        for &(theta, wt, cc, ss, sc) in &theta_terms {
            let w = wt * density.density(phi, theta);
            row_norm += w;
            row_hh += w * cc;
            row_vv += w * ss;
            row_hv += w * sc;
        }
        norm += wp * row_norm;
        hh += wp * row_hh;
        vv += wp * row_vv;
        hv += rot * (wp * row_hv);
    }
    let hv = hv / norm;
    ComplexMatrix::from_vec(
        2,
        vec![
            Complex64::new(hh / norm, 0.0),
            hv,
            hv.conj(),
            Complex64::new(vv / norm, 0.0),
        ],
    )
    .expect("2x2")
}

/// Average state for an arbitrary angle density by tensor-product
/// Gauss-Legendre quadrature, doubling the rule until entries settle.
pub fn mixed_state_quadrature(density: &impl AngleDensity, spec: &QuadratureSpec) -> Result<DensityMatrix> {
    if spec.initial_points < 200 {
        return Err(Error::param(
            "initial_points",
            "quadrature needs at least 200 points per axis",
        ));
    }
    let mut n = spec.initial_points;
    let mut current = tensor_average(density, n, spec.window_sigmas);
    loop {
        let next_n = 2 * n;
        if next_n > spec.max_points {
            let change = f64::NAN;
            return Err(Error::QuadratureUnderResolved { change, points: n });
        }
        let next = tensor_average(density, next_n, spec.window_sigmas);
        let change = (&next - &current).max_abs();
        if change <= spec.tolerance {
            return DensityMatrix::new(next);
        }
        if 2 * next_n > spec.max_points {
            return Err(Error::QuadratureUnderResolved { change, points: next_n });
        }
        n = next_n;
        current = next;
    }
}

/// Quadrature oracle for [`gaussian_state_analytic`]; all widths must be
/// strictly positive.
pub fn gaussian_state_quadrature(
    model: &GaussianPrepModel,
    index: usize,
    spec: &QuadratureSpec,
) -> Result<DensityMatrix> {
    model.validate()?;
    let d = model.density(index)?;
    if d.phi_sigma <= 0.0 || d.theta_sigma <= 0.0 {
        return Err(Error::param("sigma", "quadrature needs strictly positive widths"));
    }
    mixed_state_quadrature(&d, spec)
}

/// Unit-trace basis averages `((rho1 + rho2)/2, (rho3 + rho4)/2)`.
pub fn basis_average(states: &[DensityMatrix; 4]) -> Result<(DensityMatrix, DensityMatrix)> {
    let x = DensityMatrix::average(&[&states[0], &states[1]])?;
    let y = DensityMatrix::average(&[&states[2], &states[3]])?;
    Ok((x, y))
}

/// Source model used by the coin analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrepModel {
    Ideal(IdealPrep),
    Gaussian(GaussianPrepModel),
}

impl PrepModel {
    /// The four (possibly mixed) states; Gaussian uses the analytic average.
    pub fn states(&self) -> Result<[DensityMatrix; 4]> {
        let build = |i: usize| match self {
            PrepModel::Ideal(p) => ideal_state(p, i),
            PrepModel::Gaussian(g) => gaussian_state_analytic(g, i),
        };
        Ok([build(1)?, build(2)?, build(3)?, build(4)?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::fidelity;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_diff(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
        (a.matrix() - b.matrix()).max_abs()
    }

    fn angles(phi: f64, theta: f64) -> BlochAngles {
        BlochAngles::new(phi, theta).unwrap()
    }

    #[test]
    fn bloch_poles_and_equator() {
        let h = bloch_state(angles(0.0, 0.0));
        assert_eq!(h.matrix(), &ComplexMatrix::diag(&[1.0, 0.0]));
        let d = bloch_state(angles(0.0, FRAC_PI_2));
        for z in d.matrix().as_slice() {
            assert!((z - c(0.5, 0.0)).norm() < 1e-15);
        }
        let r = bloch_state(angles(FRAC_PI_2, FRAC_PI_2));
        assert!((r.matrix()[(0, 1)] - c(0.0, -0.5)).norm() < 1e-15);
        assert!((r.matrix()[(1, 0)] - c(0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn bloch_angles_reduce_phi_and_reject_theta() {
        assert!((BlochAngles::new(-FRAC_PI_2, 1.0).unwrap().phi() - 1.5 * PI).abs() < 1e-15);
        assert!((BlochAngles::new(5.0 * PI, 1.0).unwrap().phi() - PI).abs() < 1e-12);
        assert!(BlochAngles::new(0.0, -0.1).is_err());
        assert!(BlochAngles::new(0.0, 3.2).is_err());
    }

    #[test]
    fn bloch_states_are_pure() {
        for k in 0..50 {
            let s = bloch_state(angles(0.37 * k as f64, PI * k as f64 / 49.0));
            assert!((s.purity() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ideal_states_match_protocol_vectors() {
        let prep = IdealPrep::new(0.0);
        let d = ideal_state(&prep, 1).unwrap();
        assert!((d.matrix()[(0, 1)] - c(0.5, 0.0)).norm() < 1e-15);
        let a = ideal_state(&prep, 2).unwrap();
        assert!((a.matrix()[(0, 1)] - c(-0.5, 0.0)).norm() < 1e-15);
        let r = ideal_state(&prep, 3).unwrap();
        assert!((r.matrix()[(0, 1)] - c(0.0, -0.5)).norm() < 1e-15);
        assert!((r.matrix()[(1, 0)] - c(0.0, 0.5)).norm() < 1e-15);
        assert!(matches!(ideal_state(&prep, 0), Err(Error::BadIndex(0))));
        assert!(matches!(ideal_state(&prep, 5), Err(Error::BadIndex(5))));
    }

    #[test]
    fn ideal_basis_averages_are_maximally_mixed() {
        for phi0 in [0.0, 0.3, 1.7, -2.0] {
            let prep = PrepModel::Ideal(IdealPrep::new(phi0));
            let (x, y) = basis_average(&prep.states().unwrap()).unwrap();
            let half = ComplexMatrix::diag(&[0.5, 0.5]);
            assert!((x.matrix() - &half).max_abs() < 1e-15);
            assert!((y.matrix() - &half).max_abs() < 1e-15);
            assert!((fidelity(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_zero_width_is_the_pure_state() {
        let model = GaussianPrepModel::new([0.3, 1.2, 2.0, 4.0], [0.0; 4], 1.1, 0.0).unwrap();
        for i in 1..=4 {
            let a = gaussian_state_analytic(&model, i).unwrap();
            let b = bloch_state(angles(model.phi_mean[i - 1], 1.1));
            assert!(max_diff(&a, &b) < 1e-15);
        }
    }

    #[test]
    fn analytic_reference_entries() {
        let model = GaussianPrepModel::new([0.0; 4], [0.1; 4], FRAC_PI_2, 0.1).unwrap();
        let rho = gaussian_state_analytic(&model, 1).unwrap();
        let m = rho.matrix();
        assert!((m[(0, 0)].re - 0.5).abs() < 1e-16);
        assert!((m[(1, 1)].re - 0.5).abs() < 1e-16);
        // e^{-0.01} / 2
        assert!((m[(0, 1)].re - 0.495_024_916_874_584).abs() < 1e-15);
        assert!(m[(0, 1)].im.abs() < 1e-16);
        assert!((m.trace().re - 1.0).abs() < 1e-16);
    }

    #[test]
    fn model_validation() {
        assert!(GaussianPrepModel::new([0.0; 4], [0.31, 0.0, 0.0, 0.0], 1.0, 0.0).is_err());
        assert!(GaussianPrepModel::new([0.0; 4], [0.0; 4], 1.0, -0.1).is_err());
        assert!(GaussianPrepModel::new([0.0; 4], [0.0; 4], 4.0, 0.1).is_err());
        assert!(GaussianPrepModel::default().validate().is_ok());
    }

    #[test]
    fn quadrature_matches_analytic_symmetric_widths() {
        let model = GaussianPrepModel::new([0.0; 4], [0.1; 4], FRAC_PI_2, 0.1).unwrap();
        let q = gaussian_state_quadrature(&model, 1, &QuadratureSpec::default()).unwrap();
        let a = gaussian_state_analytic(&model, 1).unwrap();
        assert!(max_diff(&q, &a) < 1e-6);
    }

    #[test]
    fn quadrature_matches_analytic_asymmetric_widths() {
        let model = GaussianPrepModel::around_ideal(0.4, [0.2; 4], 0.05);
        for i in 1..=4 {
            let q = gaussian_state_quadrature(&model, i, &QuadratureSpec::default()).unwrap();
            let a = gaussian_state_analytic(&model, i).unwrap();
            assert!(max_diff(&q, &a) < 1e-5, "index {i}");
        }
    }

    #[test]
    fn quadrature_concentration_limit() {
        let model = GaussianPrepModel::new([0.7, 1.0, 2.0, 3.0], [1e-6; 4], 1.2, 1e-6).unwrap();
        let q = gaussian_state_quadrature(&model, 1, &QuadratureSpec::default()).unwrap();
        assert!(max_diff(&q, &bloch_state(angles(0.7, 1.2))) < 1e-6);
    }

    #[test]
    fn quadrature_normalization_matches_erf_product() {
        // the window normalization equals the truncated-Gaussian mass
        let d = GaussianAngles {
            phi_mean: 1.0,
            phi_sigma: 0.2,
            theta_mean: 0.3,
            theta_sigma: 0.15,
        };
        let (ta, tb) = d.theta_window(12.0);
        assert_eq!(ta, 0.0);
        let rule = gauss_legendre_on(400, ta, tb);
        let mass: f64 = rule.iter().map(|(t, w)| w * gaussian(*t, 0.3, 0.15)).sum();
        let s2 = std::f64::consts::SQRT_2;
        let erf_mass = 0.5 * (libm::erf(0.3 / (s2 * 0.15)) + libm::erf((tb - 0.3) / (s2 * 0.15)));
        assert!((mass - erf_mass).abs() < 1e-13);
        // truncation at theta = 0 is now significant, and the oracle handles it
        let q = mixed_state_quadrature(&d, &QuadratureSpec::default()).unwrap();
        assert!((q.matrix().trace().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quadrature_requires_positive_widths_and_resolution() {
        let model = GaussianPrepModel::new([0.0; 4], [0.0; 4], 1.0, 0.1).unwrap();
        assert!(gaussian_state_quadrature(&model, 1, &QuadratureSpec::default()).is_err());
        let model = GaussianPrepModel::default();
        let coarse = QuadratureSpec {
            initial_points: 100,
            ..QuadratureSpec::default()
        };
        assert!(gaussian_state_quadrature(&model, 1, &coarse).is_err());
    }

    #[test]
    fn basis_average_identity_and_asymmetry() {
        let s = bloch_state(angles(0.4, 1.0));
        let (x, y) = basis_average(&[s.clone(), s.clone(), s.clone(), s.clone()]).unwrap();
        assert!(max_diff(&x, &s) < 1e-15 && max_diff(&y, &s) < 1e-15);

        let model = GaussianPrepModel::around_ideal(0.0, [0.05, 0.15, 0.1, 0.1], 0.05);
        let states = PrepModel::Gaussian(model).states().unwrap();
        let (x, y) = basis_average(&states).unwrap();
        // X' keeps a residual coherence, Y' does not
        assert!(x.matrix()[(0, 1)].norm() > 1e-3);
        assert!(y.matrix()[(0, 1)].norm() < 1e-15);
        assert!(fidelity(&x, &y).unwrap() < 1.0);
    }
}
