//! Decoy-state BB84 over fiber with a Trojan-horse side channel.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prep::PrepModel;
use crate::trojan::{analyze, effective_mu_out, TrojanBudget};

/// Error rate of a random (dark-count) click.
pub const E0: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelModel {
    pub fiber_loss_db_per_km: f64,
    pub detector_efficiency: f64,
    /// Per pulse, per detector.
    pub dark_count_prob: f64,
    pub misalignment_error: f64,
    pub error_correction_efficiency: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            fiber_loss_db_per_km: 0.2,
            detector_efficiency: 0.1,
            dark_count_prob: 1e-6,
            misalignment_error: 0.01,
            error_correction_efficiency: 1.15,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.fiber_loss_db_per_km >= 0.0 && self.fiber_loss_db_per_km.is_finite()) {
            return Err(Error::param("fiber_loss_db_per_km", "must be finite and >= 0"));
        }
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) {
            return Err(Error::param("detector_efficiency", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.dark_count_prob) {
            return Err(Error::param("dark_count_prob", "must lie in [0, 1]"));
        }
        if !(0.0..=0.5).contains(&self.misalignment_error) {
            return Err(Error::param("misalignment_error", "must lie in [0, 1/2]"));
        }
        if !(self.error_correction_efficiency >= 1.0 && self.error_correction_efficiency.is_finite()) {
            return Err(Error::param("error_correction_efficiency", "must be >= 1"));
        }
        Ok(())
    }

    /// Overall transmittance including the detector.
    pub fn transmittance(&self, distance_km: f64) -> f64 {
        self.detector_efficiency * 10f64.powf(-self.fiber_loss_db_per_km * distance_km / 10.0)
    }

    /// Background yield of two detectors.
    pub fn y0(&self) -> f64 {
        let d = self.dark_count_prob;
        2.0 * d - d * d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    pub signal_intensity: f64,
    pub decoy_intensity: f64,
    pub p_signal: f64,
    pub p_decoy: f64,
    pub p_vacuum: f64,
    /// Probability of choosing basis X'.
    pub p_basis_x: f64,
    pub n_pulses: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            signal_intensity: 0.5,
            decoy_intensity: 0.1,
            p_signal: 0.8,
            p_decoy: 0.15,
            p_vacuum: 0.05,
            p_basis_x: 0.5,
            n_pulses: 1e12,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        let (mu, nu) = (self.signal_intensity, self.decoy_intensity);
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::param("decoy_intensity", "must be > 0"));
        }
        if !(mu > nu && mu.is_finite()) {
            return Err(Error::param("signal_intensity", "must exceed decoy_intensity"));
        }
        for (name, p) in [
            ("p_signal", self.p_signal),
            ("p_decoy", self.p_decoy),
            ("p_vacuum", self.p_vacuum),
            ("p_basis_x", self.p_basis_x),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(name, format!("{p} outside [0, 1]")));
            }
        }
        let total = self.p_signal + self.p_decoy + self.p_vacuum;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param(
                "p_signal",
                format!("intensity probabilities sum to {total}"),
            ));
        }
        if !(self.n_pulses > 0.0 && self.n_pulses.is_finite()) {
            return Err(Error::param("n_pulses", "must be > 0"));
        }
        Ok(())
    }

    /// Both parties in the same basis.
    pub fn sifting(&self) -> f64 {
        let px = self.p_basis_x;
        px * px + (1.0 - px) * (1.0 - px)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntensityObservables {
    pub intensity: f64,
    pub gain: f64,
    pub qber: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelObservables {
    pub eta: f64,
    pub y0: f64,
    pub misalignment: f64,
    pub signal: IntensityObservables,
    pub decoy: IntensityObservables,
    pub vacuum: IntensityObservables,
}

impl ChannelObservables {
    /// True n-photon yield.
    pub fn yield_n(&self, n: u32) -> f64 {
        1.0 - (1.0 - self.y0) * (1.0 - self.eta).powi(n as i32)
    }

    /// True n-photon error rate.
    pub fn error_n(&self, n: u32) -> f64 {
        let eta_n = 1.0 - (1.0 - self.eta).powi(n as i32);
        (E0 * self.y0 + self.misalignment * eta_n) / self.yield_n(n)
    }
}

fn observe(ch: &ChannelModel, eta: f64, intensity: f64) -> IntensityObservables {
    let y0 = ch.y0();
    let detected = -(-eta * intensity).exp_m1();
    let gain = y0 + (1.0 - y0) * detected;
    let errors = E0 * y0 + ch.misalignment_error * detected;
    IntensityObservables {
        intensity,
        gain,
        qber: if gain > 0.0 { errors / gain } else { E0 },
    }
}

/// Expected gains and error rates of the signal, decoy and vacuum settings.
pub fn channel_observables(ch: &ChannelModel, p: &ProtocolParams, distance_km: f64) -> Result<ChannelObservables> {
    if !(distance_km >= 0.0 && distance_km.is_finite()) {
        return Err(Error::param("distance_km", format!("must be >= 0, got {distance_km}")));
    }
    let eta = ch.transmittance(distance_km);
    Ok(ChannelObservables {
        eta,
        y0: ch.y0(),
        misalignment: ch.misalignment_error,
        signal: observe(ch, eta, p.signal_intensity),
        decoy: observe(ch, eta, p.decoy_intensity),
        vacuum: observe(ch, eta, 0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecoyBounds {
    pub m1_lower: f64,
    pub y1_lower: f64,
    pub e1_upper: f64,
}

/// Vacuum + weak decoy estimates of the single-photon yield and error.
pub fn decoy_single_photon_bounds(obs: &ChannelObservables, p: &ProtocolParams) -> Result<DecoyBounds> {
    let (mu, nu) = (obs.signal.intensity, obs.decoy.intensity);
    if !(nu > 0.0 && nu < mu) {
        return Err(Error::param("decoy_intensity", "need 0 < nu < mu"));
    }
    let (qm, qn, y0) = (obs.signal.gain, obs.decoy.gain, obs.vacuum.gain);
    let y1 = mu / (mu * nu - nu * nu)
        * (qn * nu.exp() - qm * mu.exp() * nu * nu / (mu * mu) - (mu * mu - nu * nu) / (mu * mu) * y0);
    if !(y1 > 0.0) {
        return Err(Error::VacuumDominated);
    }
    let y1 = y1.min(1.0);
    let e1 = ((obs.decoy.qber * qn * nu.exp() - E0 * y0) / (y1 * nu)).clamp(0.0, 0.5);
    Ok(DecoyBounds {
        m1_lower: p.n_pulses * p.p_signal * mu * (-mu).exp() * y1,
        y1_lower: y1,
        e1_upper: e1,
    })
}

pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Side channel at the nominal `mu_out`.
    Asymptotic,
    /// Side channel at the Chernoff-corrected `mu_out_eff`.
    #[default]
    Finite,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asymptotic" => Ok(Mode::Asymptotic),
            "finite" => Ok(Mode::Finite),
            other => Err(Error::param(
                "mode",
                format!("expected asymptotic or finite, got `{other}`"),
            )),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Asymptotic => "asymptotic",
            Mode::Finite => "finite",
        })
    }
}

/// Where the coin imbalance comes from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DeltaSource {
    /// Fidelity of the joint basis states.
    #[default]
    Computed,
    /// Imposed value, bypassing the side-channel model.
    Fixed(f64),
}

/// Why a point has zero key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PointStatus {
    Ok,
    VacuumDominated,
    NoSolutionBelowOne,
    PhaseBoundVacuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyRatePoint {
    pub distance_km: f64,
    pub gain_signal: f64,
    pub qber_signal: f64,
    pub m1_lower: f64,
    pub y1: f64,
    pub e1_bit: f64,
    pub mu_out_eff: f64,
    pub delta: f64,
    pub e1_phase: f64,
    pub rate: f64,
    pub rate_per_click: f64,
    pub status: PointStatus,
}

/// Everything fixed across a distance sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub channel: ChannelModel,
    pub protocol: ProtocolParams,
    pub budget: TrojanBudget,
    pub prep: PrepModel,
    pub mode: Mode,
    pub delta: DeltaSource,
}

impl Pipeline {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.protocol.validate()?;
        if let PrepModel::Gaussian(g) = &self.prep {
            g.validate()?;
        }
        if let DeltaSource::Fixed(d) = self.delta {
            if !(0.0..=0.5).contains(&d) {
                return Err(Error::param("delta_override", format!("{d} outside [0, 1/2]")));
            }
        }
        Ok(())
    }
}

/// Full pipeline at one distance: channel, decoy bounds, effective Trojan
/// intensity, coin imbalance, phase-error bound, GLLP rate.
///
/// Decoy failure or an effective intensity at or above 1 gives a zero-rate
/// point tagged with the reason.
pub fn secret_key_rate(pipe: &Pipeline, distance_km: f64) -> Result<KeyRatePoint> {
    pipe.validate()?;
    let obs = channel_observables(&pipe.channel, &pipe.protocol, distance_km)?;
    let mut point = KeyRatePoint {
        distance_km,
        gain_signal: obs.signal.gain,
        qber_signal: obs.signal.qber,
        m1_lower: 0.0,
        y1: 0.0,
        e1_bit: 0.5,
        mu_out_eff: f64::NAN,
        delta: f64::NAN,
        e1_phase: 0.5,
        rate: 0.0,
        rate_per_click: 0.0,
        status: PointStatus::Ok,
    };
    let bounds = match decoy_single_photon_bounds(&obs, &pipe.protocol) {
        Ok(b) => b,
        Err(Error::VacuumDominated) => {
            point.status = PointStatus::VacuumDominated;
            return Ok(point);
        }
        Err(e) => return Err(e),
    };
    point.m1_lower = bounds.m1_lower;
    point.y1 = bounds.y1_lower;
    point.e1_bit = bounds.e1_upper;

    let mu_eff = match pipe.mode {
        Mode::Asymptotic => pipe.budget.mu_out,
        Mode::Finite => match effective_mu_out(bounds.m1_lower, pipe.budget.mu_out, pipe.budget.epsilon) {
            Ok(m) => m,
            Err(Error::NoSolutionBelowOne) => {
                point.status = PointStatus::NoSolutionBelowOne;
                return Ok(point);
            }
            Err(e) => return Err(e),
        },
    };
    point.mu_out_eff = mu_eff;

    let coin = match pipe.delta {
        DeltaSource::Computed => analyze(&pipe.prep, mu_eff, bounds.y1_lower, bounds.e1_upper)?,
        DeltaSource::Fixed(delta) => {
            let b = crate::trojan::phase_error_bound(delta, bounds.y1_lower, bounds.e1_upper)?;
            crate::trojan::CoinAnalysis {
                fidelity: (1.0 - 2.0 * delta).powi(2),
                delta,
                y1: bounds.y1_lower,
                delta_prime: delta / bounds.y1_lower,
                e1_bit: bounds.e1_upper,
                e1_phase: b.value,
                vacuous: b.vacuous,
            }
        }
    };
    point.delta = coin.delta;
    point.e1_phase = coin.e1_phase;
    if coin.vacuous {
        point.status = PointStatus::PhaseBoundVacuous;
    }

    let mu = pipe.protocol.signal_intensity;
    let single = mu * (-mu).exp() * bounds.y1_lower * (1.0 - binary_entropy(coin.e1_phase));
    let leak = pipe.channel.error_correction_efficiency * obs.signal.gain * binary_entropy(obs.signal.qber);
    point.rate = (pipe.protocol.sifting() * (single - leak)).max(0.0);
    point.rate_per_click = point.rate / obs.signal.gain;
    Ok(point)
}

/// One point per distance, evaluated in parallel; `distances` must be
/// ascending.
pub fn sweep(pipe: &Pipeline, distances: &[f64]) -> Result<Vec<KeyRatePoint>> {
    if distances.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::param("distances", "must be sorted ascending"));
    }
    distances.par_iter().map(|&d| secret_key_rate(pipe, d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prep::{GaussianPrepModel, IdealPrep};

    fn pipeline(mu_out: f64) -> Pipeline {
        Pipeline {
            channel: ChannelModel::default(),
            protocol: ProtocolParams::default(),
            budget: TrojanBudget::direct(mu_out, 1e-10).unwrap(),
            prep: PrepModel::Ideal(IdealPrep::default()),
            mode: Mode::Finite,
            delta: DeltaSource::Computed,
        }
    }

    fn poisson_sum(alpha: f64, f: impl Fn(u32) -> f64) -> f64 {
        let mut term = (-alpha).exp();
        let mut total = 0.0;
        for n in 0..=50u32 {
            total += term * f(n);
            term *= alpha / (n + 1) as f64;
        }
        total
    }

    #[test]
    fn lossless_saturation() {
        let ch = ChannelModel {
            fiber_loss_db_per_km: 0.0,
            detector_efficiency: 1.0,
            dark_count_prob: 0.0,
            ..ChannelModel::default()
        };
        let p = ProtocolParams {
            signal_intensity: 40.0,
            decoy_intensity: 0.1,
            ..ProtocolParams::default()
        };
        let obs = channel_observables(&ch, &p, 0.0).unwrap();
        assert!((obs.signal.gain - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vacuum_setting_sees_only_dark_counts() {
        let ch = ChannelModel::default();
        let obs = channel_observables(&ch, &ProtocolParams::default(), 30.0).unwrap();
        assert_eq!(obs.vacuum.gain, ch.y0());
        assert_eq!(obs.vacuum.qber, 0.5);
    }

    #[test]
    fn closed_forms_match_poisson_series() {
        let ch = ChannelModel::default();
        let p = ProtocolParams::default();
        let obs = channel_observables(&ch, &p, 50.0).unwrap();
        for o in [obs.signal, obs.decoy] {
            let q = poisson_sum(o.intensity, |n| obs.yield_n(n));
            let eq = poisson_sum(o.intensity, |n| obs.yield_n(n) * obs.error_n(n));
            assert!((o.gain / q - 1.0).abs() < 1e-12);
            assert!((o.qber / (eq / q) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decoy_bounds_are_conservative() {
        let ch = ChannelModel::default();
        let p = ProtocolParams::default();
        for d in [0.0, 20.0, 50.0, 80.0, 100.0, 120.0] {
            let obs = channel_observables(&ch, &p, d).unwrap();
            let b = decoy_single_photon_bounds(&obs, &p).unwrap();
            assert!(b.y1_lower <= obs.yield_n(1), "d = {d}");
            assert!(b.e1_upper >= obs.error_n(1), "d = {d}");
            assert!(b.y1_lower > 0.5 * obs.yield_n(1));
        }
    }

    #[test]
    fn degenerate_decoy_rejected() {
        let p = ProtocolParams {
            decoy_intensity: 0.5,
            ..ProtocolParams::default()
        };
        assert!(p.validate().is_err());
        let mut obs = channel_observables(&ChannelModel::default(), &ProtocolParams::default(), 10.0).unwrap();
        obs.decoy.intensity = obs.signal.intensity;
        assert!(decoy_single_photon_bounds(&obs, &p).is_err());
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
        assert!((binary_entropy(0.11) - 0.499_915_958_164_528).abs() < 1e-12);
    }

    #[test]
    fn noiseless_limit() {
        let mut pipe = pipeline(0.0);
        pipe.channel.misalignment_error = 0.0;
        pipe.channel.dark_count_prob = 0.0;
        let pt = secret_key_rate(&pipe, 0.0).unwrap();
        assert!(pt.rate > 0.0);
        assert_eq!(pt.e1_bit, 0.0);
        assert_eq!(pt.e1_phase, 0.0);
        assert_eq!(pt.delta, 0.0);
    }

    #[test]
    fn reaches_beyond_100_km() {
        let pt = secret_key_rate(&pipeline(1e-6), 100.0).unwrap();
        assert!(pt.rate > 0.0);
        assert_eq!(pt.status, PointStatus::Ok);
        assert!(pt.mu_out_eff > 1e-6);
    }

    #[test]
    fn tiny_imbalance_is_invisible() {
        let mut a = pipeline(1e-6);
        let mut b = pipeline(1e-6);
        a.delta = DeltaSource::Fixed(0.0);
        b.delta = DeltaSource::Fixed(1e-11);
        let ra = secret_key_rate(&a, 50.0).unwrap().rate;
        let rb = secret_key_rate(&b, 50.0).unwrap().rate;
        assert!((ra - rb).abs() / ra <= 1e-3);
    }

    #[test]
    fn rate_monotone_and_cut_off() {
        let pipe = pipeline(1e-6);
        let distances: Vec<f64> = (0..=100).map(|k| 2.5 * k as f64).collect();
        let pts = sweep(&pipe, &distances).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].rate <= w[0].rate, "{} km", w[1].distance_km);
        }
        assert_eq!(pts.last().unwrap().rate, 0.0);
        assert!(pts.iter().all(|p| p.rate >= 0.0));
    }

    #[test]
    fn sweep_matches_pointwise() {
        let pipe = pipeline(1e-6);
        let distances = [0.0, 33.0, 70.0, 140.0];
        let pts = sweep(&pipe, &distances).unwrap();
        for (pt, &d) in pts.iter().zip(&distances) {
            assert_eq!(*pt, secret_key_rate(&pipe, d).unwrap());
        }
        assert!(sweep(&pipe, &[]).unwrap().is_empty());
        assert!(sweep(&pipe, &[10.0, 5.0]).is_err());
    }

    #[test]
    fn imperfect_prep_never_helps() {
        let ideal = pipeline(1e-6);
        let mut imperfect = pipeline(1e-6);
        imperfect.prep = PrepModel::Gaussian(GaussianPrepModel::around_ideal(0.0, [0.05, 0.2, 0.05, 0.2], 0.05));
        for d in [0.0, 40.0, 80.0, 120.0] {
            let a = secret_key_rate(&ideal, d).unwrap();
            let b = secret_key_rate(&imperfect, d).unwrap();
            assert!(a.rate >= b.rate, "d = {d}");
            assert!(b.delta > a.delta);
        }
    }

    #[test]
    fn vanishing_side_channel_is_continuous() {
        let mut pipe = pipeline(1e-14);
        pipe.mode = Mode::Asymptotic;
        let pt = secret_key_rate(&pipe, 50.0).unwrap();
        assert!(pt.delta < 1e-13);
        assert!((pt.e1_phase - pt.e1_bit).abs() < 1e-5);
    }

    #[test]
    fn starved_statistics_zero_rate() {
        let mut pipe = pipeline(0.5);
        pipe.protocol.n_pulses = 1e3;
        let pt = secret_key_rate(&pipe, 100.0).unwrap();
        assert_eq!(pt.status, PointStatus::NoSolutionBelowOne);
        assert_eq!(pt.rate, 0.0);
    }
}
