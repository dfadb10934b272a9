use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{kron, ComplexMatrix, DensityMatrix};

/// Phase factor of the one-photon V component for states 1..=4
/// (0, pi, pi/2, 3pi/2 written exactly).
const PHASES: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(-1.0, 0.0),
    Complex64::new(0.0, 1.0),
    Complex64::new(0.0, -1.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    #[serde(rename = "X'")]
    X,
    #[serde(rename = "Y'")]
    Y,
}

impl Basis {
    /// Zero-based indices of the two states in the basis.
    pub fn members(self) -> (usize, usize) {
        match self {
            Basis::X => (0, 1),
            Basis::Y => (2, 3),
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::X => "X'",
            Basis::Y => "Y'",
        })
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" | "X'" | "x" => Ok(Basis::X),
            "Y" | "Y'" | "y" => Ok(Basis::Y),
            other => Err(Error::param("basis", format!("unknown basis `{other}`"))),
        }
    }
}

fn check_mu(mu_eff: f64) -> Result<()> {
    if (0.0..=1.0).contains(&mu_eff) {
        Ok(())
    } else {
        Err(Error::MuOutOfRange(mu_eff))
    }
}

/// Eve's conservative side-channel state for setting `index` (1..=4), on the
/// ordered basis (|H_1ph>, |V_1ph>, |vac>):
/// `sqrt(1 - mu)|vac> + sqrt(mu) (|H> + e^{i phi}|V>)/sqrt(2)`.
pub fn side_channel_density(mu_eff: f64, index: usize) -> Result<DensityMatrix> {
    check_mu(mu_eff)?;
    if !(1..=4).contains(&index) {
        return Err(Error::BadIndex(index));
    }
    let phase = PHASES[index - 1];
    let half = Complex64::new(0.5 * mu_eff, 0.0);
    let coh = Complex64::new((0.5 * mu_eff * (1.0 - mu_eff)).sqrt(), 0.0);
    let vac = Complex64::new(1.0 - mu_eff, 0.0);
    #[rustfmt::skip]
    let entries = vec![
        half,               half * phase.conj(), coh,
        half * phase,       half,                coh * phase,
        coh,                coh * phase.conj(),  vac,
    ];
    DensityMatrix::new(ComplexMatrix::from_vec(3, entries)?)
}

/// Joint Alice-Eve state of a basis: `(rho_a (x) rho_Ea + rho_b (x) rho_Eb)/2`.
pub fn joint_basis_density(alice: &[DensityMatrix; 4], mu_eff: f64, basis: Basis) -> Result<DensityMatrix> {
    check_mu(mu_eff)?;
    let (a, b) = basis.members();
    let ea = side_channel_density(mu_eff, a + 1)?;
    let eb = side_channel_density(mu_eff, b + 1)?;
    let joint = (&kron(alice[a].matrix(), ea.matrix()) + &kron(alice[b].matrix(), eb.matrix())).scale(0.5);
    DensityMatrix::new(joint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{fidelity, hermitian_eig};
    use crate::prep::{IdealPrep, PrepModel};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ideal_states() -> [DensityMatrix; 4] {
        PrepModel::Ideal(IdealPrep::default()).states().unwrap()
    }

    #[test]
    fn vacuum_limit() {
        for i in 1..=4 {
            let e = side_channel_density(0.0, i).unwrap();
            assert_eq!(e.matrix(), &ComplexMatrix::diag(&[0.0, 0.0, 1.0]));
        }
    }

    #[test]
    fn full_intensity_is_diagonal_photon() {
        let e = side_channel_density(1.0, 1).unwrap();
        let m = e.matrix();
        for (r, col) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!((m[(r, col)] - c(0.5, 0.0)).norm() < 1e-15);
        }
        for k in 0..3 {
            assert_eq!(m[(k, 2)], c(0.0, 0.0));
            assert_eq!(m[(2, k)], c(0.0, 0.0));
        }
    }

    #[test]
    #[rustfmt::skip]
    fn entries_match_symbolic_form() {
        let mu: f64 = 0.3;
        let half = mu / 2.0;
        let coh = (mu * (1.0 - mu) / 2.0).sqrt();
        let expected: [[Complex64; 9]; 4] = [
            [
                c(half, 0.0), c(half, 0.0), c(coh, 0.0),
                c(half, 0.0), c(half, 0.0), c(coh, 0.0),
                c(coh, 0.0), c(coh, 0.0), c(1.0 - mu, 0.0),
            ],
            [
                c(half, 0.0), c(-half, 0.0), c(coh, 0.0),
                c(-half, 0.0), c(half, 0.0), c(-coh, 0.0),
                c(coh, 0.0), c(-coh, 0.0), c(1.0 - mu, 0.0),
            ],
            [
                c(half, 0.0), c(0.0, -half), c(coh, 0.0),
                c(0.0, half), c(half, 0.0), c(0.0, coh),
                c(coh, 0.0), c(0.0, -coh), c(1.0 - mu, 0.0),
            ],
            [
                c(half, 0.0), c(0.0, half), c(coh, 0.0),
                c(0.0, -half), c(half, 0.0), c(0.0, -coh),
                c(coh, 0.0), c(0.0, coh), c(1.0 - mu, 0.0),
            ],
        ];
        for (i, exp) in expected.iter().enumerate() {
            let m = side_channel_density(mu, i + 1).unwrap();
            for (got, want) in m.matrix().as_slice().iter().zip(exp) {
                assert_eq!(got, want, "state {}", i + 1);
            }
        }
    }

    #[test]
    fn side_channel_states_are_pure() {
        for mu in [0.0, 1e-12, 1e-6, 0.01, 0.5, 0.999, 1.0] {
            for i in 1..=4 {
                let e = side_channel_density(mu, i).unwrap();
                assert!((e.purity() - 1.0).abs() < 1e-14);
                assert!((e.matrix().trace().re - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn side_channel_errors() {
        assert!(matches!(side_channel_density(1.5, 1), Err(Error::MuOutOfRange(_))));
        assert!(matches!(side_channel_density(-1e-9, 1), Err(Error::MuOutOfRange(_))));
        assert!(matches!(side_channel_density(0.1, 0), Err(Error::BadIndex(0))));
        assert!(matches!(side_channel_density(0.1, 5), Err(Error::BadIndex(5))));
    }

    #[test]
    fn ideal_vacuum_joint_states() {
        let alice = ideal_states();
        let target = kron(
            &ComplexMatrix::diag(&[0.5, 0.5]),
            &ComplexMatrix::diag(&[0.0, 0.0, 1.0]),
        );
        let x = joint_basis_density(&alice, 0.0, Basis::X).unwrap();
        let y = joint_basis_density(&alice, 0.0, Basis::Y).unwrap();
        assert!((x.matrix() - &target).max_abs() < 1e-15);
        assert!((y.matrix() - &target).max_abs() < 1e-15);
        assert!((fidelity(&x, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ideal_joint_states_are_valid() {
        let alice = ideal_states();
        for basis in [Basis::X, Basis::Y] {
            let rho = joint_basis_density(&alice, 1e-6, basis).unwrap();
            assert!((rho.matrix().trace().re - 1.0).abs() < 1e-14);
            let eig = hermitian_eig(rho.matrix()).unwrap();
            assert!(eig.values[0] >= -1e-10);
        }
    }

    #[test]
    fn basis_parsing() {
        assert_eq!("X'".parse::<Basis>().unwrap(), Basis::X);
        assert_eq!("y".parse::<Basis>().unwrap(), Basis::Y);
        assert!("Z".parse::<Basis>().is_err());
        assert_eq!(Basis::Y.to_string(), "Y'");
    }
}
