use num_complex::Complex64;

use super::{hermitian_eig, ComplexMatrix};
use crate::error::{Error, Result};

const HERMITIAN_REL_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

/// Eigenvalues below this fraction of the largest one are treated as part of
/// the null space when factoring a state for the fidelity.
const RANK_TOL: f64 = 1e-14;

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        let dev = m.hermiticity_deviation();
        if dev > HERMITIAN_REL_TOL * (1.0 + m.max_abs()) {
            return Err(Error::InvalidDensityMatrix(format!("Hermiticity deviation {dev:.3e}")));
        }
        let tr = m.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
        }
        let min = hermitian_eig(&m)?.values[0];
        if min < -PSD_TOL {
            return Err(Error::InvalidDensityMatrix(format!("min eigenvalue {min:.3e}")));
        }
        Ok(Self(m))
    }

    /// |psi><psi| for a normalized vector.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        Self::new(ComplexMatrix::projector(psi))
    }

    /// Equal-weight mixture of states of the same dimension.
    pub fn average(states: &[&DensityMatrix]) -> Result<Self> {
        let (first, rest) = states
            .split_first()
            .ok_or_else(|| Error::param("states", "cannot average an empty list"))?;
        let mut sum = first.0.clone();
        for s in rest {
            sum = sum.try_add(&s.0)?;
        }
        Self::new(sum.scale(1.0 / states.len() as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.0
    }

    /// Tr(rho^2).
    pub fn purity(&self) -> f64 {
        let n = self.dim();
        let mut p = 0.0;
        for i in 0..n {
            for j in 0..n {
                p += (self.0[(i, j)] * self.0[(j, i)]).re;
            }
        }
        p
    }

    /// Columns `sqrt(lambda_k) v_k` spanning the support, so rho = A A^dagger.
    fn factor(&self) -> Result<Vec<Vec<Complex64>>> {
        let eig = hermitian_eig(&self.0)?;
        let largest = eig.values.last().copied().unwrap_or(0.0).max(0.0);
        let cutoff = RANK_TOL * largest;
        Ok(eig
            .values
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l > cutoff)
            .map(|(k, &l)| {
                let s = l.sqrt();
                eig.column(k).into_iter().map(|z| z * s).collect()
            })
            .collect())
    }
}

impl AsRef<ComplexMatrix> for DensityMatrix {
    fn as_ref(&self) -> &ComplexMatrix {
        &self.0
    }
}

/// Uhlmann fidelity `F = [Tr sqrt(sqrt(rho) sigma sqrt(rho))]^2`, in [0, 1].
///
/// Evaluated through support factors `rho = A A^dagger`, `sigma = B B^dagger`:
/// `sqrt(F)` is the trace norm of `A^dagger B`. Null-space noise of the
/// rank-deficient joint states never passes through a square root this way.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            left: rho.dim(),
            right: sigma.dim(),
        });
    }
    let a = rho.factor()?;
    let b = sigma.factor()?;
    if a.is_empty() || b.is_empty() {
        return Ok(0.0);
    }
    // Columns of K = A^dagger B, one per support vector of sigma.
    let mut k: Vec<Vec<Complex64>> = b
        .iter()
        .map(|bj| {
            a.iter()
                .map(|ai| ai.iter().zip(bj).map(|(x, y)| x.conj() * y).sum())
                .collect()
        })
        .collect();
    if k.len() > a.len() {
        k = transpose_conj(&k, a.len());
    }
    let root_fid: f64 = singular_values(k).iter().sum();
    Ok((root_fid * root_fid).clamp(0.0, 1.0))
}

fn transpose_conj(cols: &[Vec<Complex64>], rows: usize) -> Vec<Vec<Complex64>> {
    (0..rows).map(|i| cols.iter().map(|c| c[i].conj()).collect()).collect()
}

/// One-sided (Hestenes) Jacobi SVD on a list of columns; returns the column
/// norms after orthogonalization. Small singular values come out with
/// absolute error near machine epsilon, unlike square roots of a Gram
/// matrix's eigenvalues.
fn singular_values(mut cols: Vec<Vec<Complex64>>) -> Vec<f64> {
    let n = cols.len();
    for _ in 0..60 {
        let mut converged = true;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha: f64 = cols[i].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = cols[j].iter().map(|z| z.norm_sqr()).sum();
                let gamma: Complex64 = cols[i].iter().zip(&cols[j]).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(j);
                for (x, y) in left[i].iter_mut().zip(right[0].iter_mut()) {
                    let yp = *y * phase.conj();
                    let xi = *x;
                    *x = xi * c - yp * s;
                    *y = xi * s + yp * c;
                }
            }
        }
        if converged {
            break;
        }
    }
    cols.iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect()
}
