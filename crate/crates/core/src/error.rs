use thiserror::Error;

/// Errors raised by the analysis library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NonHermitianInput { deviation: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("state index {0} out of range 1..=4")]
    BadIndex(usize),

    #[error("side-channel intensity {0} outside [0, 1]")]
    MuOutOfRange(f64),

    #[error("quadrature did not converge (last entrywise change {change:.3e} at {points} points)")]
    QuadratureUnderResolved { change: f64, points: usize },

    #[error("no effective intensity below 1 satisfies the finite-statistics equation")]
    NoSolutionBelowOne,

    #[error("Chernoff equation has no solution (x = {x}, epsilon = {epsilon})")]
    NoSolution { x: f64, epsilon: f64 },

    #[error("argument {0} outside the domain of the principal Lambert W branch")]
    OutOfDomain(f64),

    #[error("decoy estimate of the single-photon yield is not positive")]
    VacuumDominated,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
