use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Diagonal jitter ladder, as multiples of `trace(a) / dim(a)`.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Relative tolerance of the symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Upper-triangular factor `u` with `uᵀu = a + jitter·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor<T> {
    pub upper: Matrix<T>,
    /// Absolute diagonal shift that made the factorization succeed (0 when none was needed).
    pub jitter: T,
}

/// Factors a symmetric positive (semi-)definite matrix as `uᵀu`, walking the jitter
/// ladder when a pivot collapses.
pub fn cholesky_upper<T: Scalar>(a: &Matrix<T>) -> Result<CholeskyFactor<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::dim("cholesky of non-square matrix", n, a.cols()));
    }
    let scale = a
        .as_slice()
        .iter()
        .fold(T::zero(), |m, &v| m.max(v.abs()));
    let mut asym = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if scale > T::zero() && asym / scale > T::lit(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric((asym / scale).to_f64_lossy()));
    }
    if n == 0 {
        return Ok(CholeskyFactor {
            upper: Matrix::zeros(0, 0),
            jitter: T::zero(),
        });
    }

    let mean_diag = a.trace() / T::lit(n as f64);
    let max_diag = (0..n).fold(T::zero(), |m, i| m.max(a[(i, i)].abs()));
    let mut last = T::zero();
    for &c in &JITTER_LADDER {
        let jitter = T::lit(c) * mean_diag.abs();
        last = jitter;
        let pivot_floor = T::lit(n as f64) * T::epsilon() * (max_diag + jitter);
        if let Some(upper) = factor(a, jitter, pivot_floor) {
            return Ok(CholeskyFactor { upper, jitter });
        }
    }
    Err(Error::NotDecomposable {
        max_jitter: last.to_f64_lossy(),
    })
}

fn factor<T: Scalar>(a: &Matrix<T>, jitter: T, pivot_floor: T) -> Option<Matrix<T>> {
    let n = a.rows();
    let mut u = Matrix::zeros(n, n);
    for i in 0..n {
        let mut d = a[(i, i)] + jitter;
        for k in 0..i {
            d -= u[(k, i)] * u[(k, i)];
        }
        if !(d > pivot_floor) {
            return None;
        }
        let uii = d.sqrt();
        u[(i, i)] = uii;
        for j in (i + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..i {
                s -= u[(k, i)] * u[(k, j)];
            }
            u[(i, j)] = s / uii;
        }
    }
    Some(u)
}
