use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Geometric, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Smallest accepted number of simulated pulses.
pub const MIN_PULSES: u64 = 10_000;

const SHARDS: u64 = 16;
const NORM_TOL: f64 = 1e-12;

/// Photon-number statistics of a Trojan probe leaving the device.
#[derive(Debug, Clone, PartialEq)]
pub enum PhotonNumberDistribution {
    /// `P_n` for `n = 0..len`.
    Finite(Vec<f64>),
    Poisson {
        mean: f64,
    },
    /// Thermal statistics, `P_n = mean^n / (1 + mean)^(n+1)`.
    Geometric {
        mean: f64,
    },
    /// Weighted mixture of components.
    Mixture(Vec<(f64, PhotonNumberDistribution)>),
}

impl PhotonNumberDistribution {
    /// `{P_0 = 1 - mu, P_1 = mu}`: every photon fills a separate pulse.
    pub fn two_point(mu: f64) -> Self {
        Self::Finite(vec![1.0 - mu, mu])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Finite(p) => {
                if p.is_empty() || p.iter().any(|&x| !(x >= 0.0)) {
                    return Err(Error::param("probabilities", "must be nonempty and nonnegative"));
                }
                let total: f64 = p.iter().sum();
                if (total - 1.0).abs() > NORM_TOL {
                    return Err(Error::param("probabilities", format!("sum to {total}, not 1")));
                }
            }
            Self::Poisson { mean } | Self::Geometric { mean } => {
                if !(*mean >= 0.0 && mean.is_finite()) {
                    return Err(Error::param("mean", format!("must be >= 0, got {mean}")));
                }
            }
            Self::Mixture(parts) => {
                if parts.is_empty() || parts.iter().any(|(w, _)| !(*w >= 0.0)) {
                    return Err(Error::param("weights", "must be nonempty and nonnegative"));
                }
                let total: f64 = parts.iter().map(|(w, _)| w).sum();
                if (total - 1.0).abs() > NORM_TOL {
                    return Err(Error::param("weights", format!("sum to {total}, not 1")));
                }
                for (_, d) in parts {
                    d.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Finite(p) => p.iter().enumerate().map(|(n, q)| n as f64 * q).sum(),
            Self::Poisson { mean } | Self::Geometric { mean } => *mean,
            Self::Mixture(parts) => parts.iter().map(|(w, d)| w * d.mean()).sum(),
        }
    }

    /// Probability that a pulse carries at least one photon.
    pub fn fill_probability(&self) -> f64 {
        match self {
            Self::Finite(p) => 1.0 - p[0],
            Self::Poisson { mean } => -(-mean).exp_m1(),
            Self::Geometric { mean } => mean / (1.0 + mean),
            Self::Mixture(parts) => parts.iter().map(|(w, d)| w * d.fill_probability()).sum(),
        }
    }

    fn sampler(&self) -> Result<Sampler> {
        let bad = |e: String| Error::param("distribution", e);
        Ok(match self {
            Self::Finite(p) => Sampler::Finite(WeightedIndex::new(p).map_err(|e| bad(e.to_string()))?),
            Self::Poisson { mean } if *mean == 0.0 => Sampler::Vacuum,
            Self::Geometric { mean } if *mean == 0.0 => Sampler::Vacuum,
            Self::Poisson { mean } => Sampler::Poisson(Poisson::new(*mean).map_err(|e| bad(e.to_string()))?),
            Self::Geometric { mean } => {
                Sampler::Geometric(Geometric::new(1.0 / (1.0 + mean)).map_err(|e| bad(e.to_string()))?)
            }
            Self::Mixture(parts) => {
                let pick = WeightedIndex::new(parts.iter().map(|(w, _)| *w)).map_err(|e| bad(e.to_string()))?;
                let comps = parts.iter().map(|(_, d)| d.sampler()).collect::<Result<Vec<_>>>()?;
                Sampler::Mixture(pick, comps)
            }
        })
    }
}

enum Sampler {
    Vacuum,
    Finite(WeightedIndex<f64>),
    Poisson(Poisson<f64>),
    Geometric(Geometric),
    Mixture(WeightedIndex<f64>, Vec<Sampler>),
}

impl Sampler {
    fn photons<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Sampler::Vacuum => 0,
            Sampler::Finite(w) => w.sample(rng) as u64,
            Sampler::Poisson(p) => p.sample(rng) as u64,
            Sampler::Geometric(g) => g.sample(rng),
            Sampler::Mixture(pick, comps) => comps[pick.sample(rng)].photons(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FillResult {
    /// Pulses carrying at least one Trojan photon.
    pub filled: u64,
    pub fraction: f64,
}

/// Draws `n_pulses` photon numbers and counts the nonempty pulses.
///
/// Pulses are split over fixed shards with independent ChaCha streams, so
/// the result depends only on `seed`, not on the thread count.
pub fn simulate_trojan_fill(dist: &PhotonNumberDistribution, n_pulses: u64, seed: u64) -> Result<FillResult> {
    dist.validate()?;
    if n_pulses < MIN_PULSES {
        return Err(Error::param(
            "n_pulses",
            format!("need at least {MIN_PULSES}, got {n_pulses}"),
        ));
    }
    let mean = dist.mean();
    if mean > 1.0 {
        return Err(Error::param("distribution", format!("mean {mean} exceeds 1")));
    }
    let sampler = dist.sampler()?;
    let filled: u64 = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let count = n_pulses / SHARDS + u64::from(shard < n_pulses % SHARDS);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard);
            (0..count).filter(|_| sampler.photons(&mut rng) > 0).count() as u64
        })
        .sum();
    Ok(FillResult {
        filled,
        fraction: filled as f64 / n_pulses as f64,
    })
}
