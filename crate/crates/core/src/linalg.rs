//! Thin wrappers over `faer` for the dense complex decompositions used by the
//! estimators, plus a few scalar helpers shared across modules.

use faer::{linalg::solvers::SolveLstsq, Mat, MatRef, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const TAU: f64 = std::f64::consts::TAU;

#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::new(theta.cos(), theta.sin())
}

/// Maps `x` into `[0, period)`.
#[inline]
pub fn wrap_to(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    // rem_euclid can round up to `period` for tiny negative inputs
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Maps `x` into `(-period/2, period/2]`.
#[inline]
pub fn wrap_centered(x: f64, period: f64) -> f64 {
    let half = period / 2.0;
    let r = wrap_to(x + half, period) - half;
    if r <= -half {
        r + period
    } else {
        r
    }
}

/// Eigen-decomposition of a Hermitian matrix. Eigenvalues ascend; column `i`
/// of the returned matrix pairs with eigenvalue `i`.
pub fn hermitian_eigen(a: MatRef<'_, C64>) -> Result<(Vec<f64>, Mat<C64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    let values = evd.S().column_vector().iter().map(|v| v.re).collect();
    Ok((values, evd.U().to_owned()))
}

/// Eigenvalues of a general square complex matrix.
pub fn eigenvalues(a: MatRef<'_, C64>) -> Result<Vec<C64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    a.eigenvalues()
        .map_err(|e| Error::Decomposition(format!("{e:?}")))
}

/// Thin SVD; singular values are sorted in nonincreasing order.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Mat<C64>,
    pub s: Vec<f64>,
    pub v: Mat<C64>,
}

pub fn thin_svd(a: MatRef<'_, C64>) -> Result<ThinSvd> {
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    Ok(ThinSvd {
        u: svd.U().to_owned(),
        s: svd.S().column_vector().iter().map(|v| v.re).collect(),
        v: svd.V().to_owned(),
    })
}

pub fn singular_values(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    let s = a
        .singular_values()
        .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    Ok(s)
}

/// Least-squares solution of `a x = b` through Householder QR. `a` must have
/// at least as many rows as columns.
pub fn lstsq(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Mat<C64> {
    a.qr().solve_lstsq(b)
}

/// Log-magnitude and unit phase of `det(a)` by LU with partial pivoting.
/// A singular matrix yields `(-inf, 1)`.
pub fn log_det(a: MatRef<'_, C64>) -> (f64, C64) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "log_det needs a square matrix");
    let mut lu: Vec<C64> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            lu.push(a[(i, j)]);
        }
    }
    let mut log_mag = 0.0;
    let mut phase = C64::new(1.0, 0.0);
    for k in 0..n {
        let (mut piv, mut best) = (k, lu[k * n + k].norm());
        for i in k + 1..n {
            let v = lu[i * n + k].norm();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if best == 0.0 {
            return (f64::NEG_INFINITY, C64::new(1.0, 0.0));
        }
        if piv != k {
            for j in 0..n {
                lu.swap(k * n + j, piv * n + j);
            }
            phase = -phase;
        }
        let p = lu[k * n + k];
        log_mag += best.ln();
        phase *= p / best;
        for i in k + 1..n {
            let f = lu[i * n + k] / p;
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            for j in k + 1..n {
                let t = lu[k * n + j];
                lu[i * n + j] -= f * t;
            }
        }
    }
    (log_mag, phase)
}

/// Frobenius norm of `a - b`.
pub fn frobenius_distance(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += (a[(i, j)] - b[(i, j)]).norm_sqr();
        }
    }
    acc.sqrt()
}
