//! Cyclic complex Jacobi eigen-solver for Hermitian matrices.
//!
//! Jacobi rotations keep small eigenvalues accurate relative to the matrix
//! norm, which matters here: the quantum-coin imbalance is read off
//! `1 - sqrt(F)` at the 1e-7 level and the joint states are rank deficient.

use num_complex::Complex64;

use super::{ComplexMatrix, HERMITIAN_TOL};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues below this are an error for [`sqrt_psd`]; values in
/// `[-PSD_CLAMP, 0)` are rounded up to zero.
pub const PSD_CLAMP: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// V diag(f(lambda)) V^dagger.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.vectors.dim();
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        ComplexMatrix::from_fn(n, |i, j| {
            (0..n)
                .map(|k| self.vectors[(i, k)] * self.vectors[(j, k)].conj() * mapped[k])
                .sum()
        })
    }

    pub fn column(&self, k: usize) -> Vec<Complex64> {
        let n = self.vectors.dim();
        (0..n).map(|i| self.vectors[(i, k)]).collect()
    }
}

/// Eigendecomposition `h = V diag(lambda) V^dagger`.
///
/// The input is symmetrized as `(h + h^dagger)/2` first; a Hermiticity
/// deviation above `1e-10 * (1 + max|h_ij|)` is rejected.
pub fn hermitian_eig(h: &ComplexMatrix) -> Result<HermitianEigen> {
    let deviation = h.hermiticity_deviation();
    if deviation > HERMITIAN_TOL * (1.0 + h.max_abs()) {
        return Err(Error::NonHermitianInput { deviation });
    }
    let n = h.dim();
    let mut a = h.hermitian_part();
    for i in 0..n {
        a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
    }
    let mut v = ComplexMatrix::identity(n);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r == 0.0 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let g = 100.0 * r;
                if app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[(p, q)] = Complex64::new(0.0, 0.0);
                    a[(q, p)] = Complex64::new(0.0, 0.0);
                    continue;
                }
                rotated = true;
                rotate(&mut a, &mut v, p, q, app, aqq, apq, r);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&k| a[(k, k)].re).collect();
    let vectors = ComplexMatrix::from_fn(n, |i, j| v[(i, order[j])]);
    Ok(HermitianEigen { values, vectors })
}

/// One Jacobi rotation zeroing `a[p][q]`. The complex phase of the pivot is
/// absorbed into a diagonal unitary so the remaining rotation is real.
#[allow(clippy::too_many_arguments)]
fn rotate(
    a: &mut ComplexMatrix,
    v: &mut ComplexMatrix,
    p: usize,
    q: usize,
    app: f64,
    aqq: f64,
    apq: Complex64,
    r: f64,
) {
    let n = a.dim();
    let phase = apq / r;
    let diff = aqq - app;
    let t = if diff.abs() + 100.0 * r == diff.abs() {
        r / diff
    } else {
        let theta = 0.5 * diff / r;
        let t = 1.0 / (theta.abs() + (theta * theta + 1.0).sqrt());
        if theta < 0.0 {
            -t
        } else {
            t
        }
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let pc = phase.conj();

    // A <- A U, V <- V U
    for k in 0..n {
        let (akp, akq) = (a[(k, p)], a[(k, q)]);
        a[(k, p)] = akp * c - akq * pc * s;
        a[(k, q)] = akp * s + akq * pc * c;
        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
        v[(k, p)] = vkp * c - vkq * pc * s;
        v[(k, q)] = vkp * s + vkq * pc * c;
    }
    // A <- U^dagger A
    for k in 0..n {
        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
        a[(p, k)] = apk * c - aqk * phase * s;
        a[(q, k)] = apk * s + aqk * phase * c;
    }
    a[(p, q)] = Complex64::new(0.0, 0.0);
    a[(q, p)] = Complex64::new(0.0, 0.0);
    a[(p, p)] = Complex64::new(app - t * r, 0.0);
    a[(q, q)] = Complex64::new(aqq + t * r, 0.0);
}

/// Principal square root of a positive semidefinite Hermitian matrix.
pub fn sqrt_psd(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = hermitian_eig(h)?;
    let min = eig.values[0];
    if min < -PSD_CLAMP {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(eig.map_spectrum(|l| l.max(0.0).sqrt()))
}
