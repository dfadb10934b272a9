//! Trojan-horse side channel: conservative emission states, the quantum-coin
//! imbalance, the phase-error bound and finite-statistics corrections.

mod budget;
mod coin;
mod fill;
mod side_channel;

pub use budget::{effective_mu_out, TrojanBudget};
pub use coin::{analyze, coin_imbalance, phase_error_bound, CoinAnalysis, PhaseErrorBound, DELTA_FLOOR};
pub use fill::{simulate_trojan_fill, FillResult, PhotonNumberDistribution, MIN_PULSES};
pub use side_channel::{joint_basis_density, side_channel_density, Basis};
