//! TOML run configuration shared by the command-line tools.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::keyrate::{ChannelModel, DeltaSource, Mode, Pipeline, ProtocolParams};
use crate::prep::{GaussianPrepModel, IdealPrep, PrepModel, IDEAL_OFFSETS};
use crate::trojan::TrojanBudget;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for `{field}`: {reason}")]
    Field { field: String, reason: String },
}

impl ConfigError {
    fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Field {
            field: field.into(),
            reason: reason.into(),
        }
    }

    fn within(section: &str, e: Error) -> Self {
        match e {
            Error::InvalidParameter { name, reason } => Self::field(format!("{section}.{name}"), reason),
            other => Self::field(section, other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrepKind {
    #[default]
    Ideal,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepSection {
    pub kind: PrepKind,
    /// Common phase offset of the four states.
    pub phi0: f64,
    /// Gaussian only; defaults to the ideal phases shifted by `phi0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_mean: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_sigma: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_sigma: Option<f64>,
}

impl PrepSection {
    pub fn model(&self) -> Result<PrepModel, ConfigError> {
        match self.kind {
            PrepKind::Ideal => {
                for (name, set) in [
                    ("prep.phi_mean", self.phi_mean.is_some()),
                    ("prep.phi_sigma", self.phi_sigma.is_some()),
                    ("prep.theta_mean", self.theta_mean.is_some()),
                    ("prep.theta_sigma", self.theta_sigma.is_some()),
                ] {
                    if set {
                        return Err(ConfigError::field(name, "only allowed with kind = \"gaussian\""));
                    }
                }
                Ok(PrepModel::Ideal(IdealPrep::new(self.phi0)))
            }
            PrepKind::Gaussian => {
                let default = GaussianPrepModel::default();
                let model = GaussianPrepModel {
                    phi_mean: self.phi_mean.unwrap_or(IDEAL_OFFSETS.map(|o| o + self.phi0)),
                    phi_sigma: self.phi_sigma.unwrap_or(default.phi_sigma),
                    theta_mean: self.theta_mean.unwrap_or(default.theta_mean),
                    theta_sigma: self.theta_sigma.unwrap_or(default.theta_sigma),
                };
                model.validate().map_err(|e| ConfigError::within("prep", e))?;
                Ok(PrepModel::Gaussian(model))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_out: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_intensity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attenuation_db: Option<f64>,
    pub epsilon: f64,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            mu_out: Some(1e-6),
            input_intensity: None,
            attenuation_db: None,
            epsilon: 1e-10,
        }
    }
}

impl BudgetSection {
    pub fn budget(&self) -> Result<TrojanBudget, ConfigError> {
        let within = |e| ConfigError::within("budget", e);
        match (self.mu_out, self.input_intensity, self.attenuation_db) {
            (Some(mu), None, None) => TrojanBudget::direct(mu, self.epsilon).map_err(within),
            (None, Some(i), Some(a)) => TrojanBudget::from_hardware(i, a, self.epsilon).map_err(within),
            (Some(_), _, _) => Err(ConfigError::field(
                "budget.mu_out",
                "give either mu_out or input_intensity + attenuation_db, not both",
            )),
            (None, None, None) => Err(ConfigError::field(
                "budget.mu_out",
                "missing; give mu_out or input_intensity + attenuation_db",
            )),
            (None, None, _) => Err(ConfigError::field("budget.input_intensity", "missing")),
            (None, _, None) => Err(ConfigError::field("budget.attenuation_db", "missing")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            distances: None,
            start: Some(0.0),
            stop: Some(200.0),
            step: Some(5.0),
        }
    }
}

impl SweepSection {
    pub fn distances(&self) -> Result<Vec<f64>, ConfigError> {
        let list = match (&self.distances, self.start, self.stop, self.step) {
            (Some(d), None, None, None) => d.clone(),
            (None, Some(start), Some(stop), Some(step)) => {
                if !(step > 0.0 && step.is_finite()) {
                    return Err(ConfigError::field("sweep.step", "must be > 0"));
                }
                if !(stop >= start) {
                    return Err(ConfigError::field("sweep.stop", "must be >= start"));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..n).map(|k| start + k as f64 * step).collect()
            }
            (Some(_), _, _, _) => {
                return Err(ConfigError::field(
                    "sweep.distances",
                    "give either distances or start/stop/step, not both",
                ))
            }
            _ => {
                return Err(ConfigError::field(
                    "sweep",
                    "need distances or all of start, stop, step",
                ))
            }
        };
        if list.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(ConfigError::field("sweep.distances", "must be finite and >= 0"));
        }
        if list.windows(2).any(|w| w[0] > w[1]) {
            return Err(ConfigError::field("sweep.distances", "must be sorted ascending"));
        }
        Ok(list)
    }
}

/// Inputs of the standalone coin report, and the forced-imbalance switch of
/// the key-rate sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoinSection {
    pub e1_bit: f64,
    pub y1: f64,
    /// Needed for the coin report in finite mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m1_lower: Option<f64>,
    /// Key-rate sweep uses this imbalance instead of computing it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_override: Option<f64>,
}

impl Default for CoinSection {
    fn default() -> Self {
        Self {
            e1_bit: 0.01,
            y1: 1.0,
            m1_lower: None,
            delta_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub prep: PrepSection,
    pub budget: BudgetSection,
    pub channel: ChannelModel,
    pub protocol: ProtocolParams,
    pub sweep: SweepSection,
    pub coin: CoinSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.prep.model()?;
        self.budget.budget()?;
        self.channel.validate().map_err(|e| ConfigError::within("channel", e))?;
        self.protocol
            .validate()
            .map_err(|e| ConfigError::within("protocol", e))?;
        self.sweep.distances()?;
        let c = &self.coin;
        if !(0.0..=0.5).contains(&c.e1_bit) {
            return Err(ConfigError::field("coin.e1_bit", "must lie in [0, 1/2]"));
        }
        if !(c.y1 > 0.0 && c.y1 <= 1.0) {
            return Err(ConfigError::field("coin.y1", "must lie in (0, 1]"));
        }
        if let Some(m) = c.m1_lower {
            if !(m > 0.0 && m.is_finite()) {
                return Err(ConfigError::field("coin.m1_lower", "must be > 0"));
            }
        }
        if let Some(d) = c.delta_override {
            if !(0.0..=0.5).contains(&d) {
                return Err(ConfigError::field("coin.delta_override", "must lie in [0, 1/2]"));
            }
        }
        Ok(())
    }

    pub fn pipeline(&self) -> Result<Pipeline, ConfigError> {
        Ok(Pipeline {
            channel: self.channel,
            protocol: self.protocol,
            budget: self.budget.budget()?,
            prep: self.prep.model()?,
            mode: self.mode,
            delta: match self.coin.delta_override {
                Some(d) => DeltaSource::Fixed(d),
                None => DeltaSource::Computed,
            },
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// The config as `# `-prefixed lines, for output headers.
    pub fn comment_block(&self) -> String {
        self.to_toml()
            .lines()
            .map(|l| format!("# {l}\n").replace("# \n", "#\n"))
            .collect()
    }
}
