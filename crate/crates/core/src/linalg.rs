//! Small dense helpers shared by the estimation modules.
//!
//! Vectors are plain `Vec<Complex64>`; matrices are column-major `faer::Mat`.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// `exp(j·phase)`.
#[inline]
pub fn cis(phase: f64) -> C64 {
    C64::new(phase.cos(), phase.sin())
}

pub fn norm2_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm2(v: &[C64]) -> f64 {
    norm2_sqr(v).sqrt()
}

/// Standard complex inner product `b^H a`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// Frobenius inner product `trace(B^H A)`.
pub fn inner_mat(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> C64 {
    let mut acc = ZERO;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)] * b[(i, j)].conj();
        }
    }
    acc
}

pub fn fro_norm_sqr(a: MatRef<'_, C64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)].norm_sqr();
        }
    }
    acc
}

pub fn fro_norm(a: MatRef<'_, C64>) -> f64 {
    fro_norm_sqr(a).sqrt()
}

/// `A x`.
pub fn matvec(a: MatRef<'_, C64>, x: &[C64]) -> Vec<C64> {
    debug_assert_eq!(a.ncols(), x.len());
    let mut out = vec![ZERO; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == ZERO {
            continue;
        }
        let col = a.col(j);
        for (i, o) in out.iter_mut().enumerate() {
            *o += col[i] * xj;
        }
    }
    out
}

/// `A^H x`.
pub fn adj_matvec(a: MatRef<'_, C64>, x: &[C64]) -> Vec<C64> {
    debug_assert_eq!(a.nrows(), x.len());
    (0..a.ncols())
        .map(|j| {
            let col = a.col(j);
            x.iter()
                .enumerate()
                .map(|(i, xi)| col[i].conj() * xi)
                .sum()
        })
        .collect()
}

pub fn col_to_vec(a: MatRef<'_, C64>, j: usize) -> Vec<C64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

/// Hermitian Toeplitz matrix whose first column is `u` (`u[0]` is taken as real).
pub fn toeplitz(u: &[C64]) -> Mat<C64> {
    let n = u.len();
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(u[0].re, 0.0)
        } else if i > j {
            u[i - j]
        } else {
            u[j - i].conj()
        }
    })
}

/// `(H + H^H) / 2`.
pub fn hermitian_part(h: MatRef<'_, C64>) -> Mat<C64> {
    let n = h.nrows();
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(h[(i, i)].re, 0.0)
        } else {
            (h[(i, j)] + h[(j, i)].conj()) * 0.5
        }
    })
}

pub fn is_finite_mat(a: MatRef<'_, C64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].is_finite()))
}

/// Eigendecomposition of a Hermitian matrix (lower triangle is read).
/// Eigenvalues ascend; eigenvectors are the columns of the returned matrix.
pub fn hermitian_eigen(h: MatRef<'_, C64>) -> Result<(Vec<f64>, Mat<C64>)> {
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let vals = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn hermitian_eigenvalues(h: MatRef<'_, C64>) -> Result<Vec<f64>> {
    h.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigenvalues failed: {e:?}")))
}

/// Least-squares solve `min ‖A X − B‖_F` for full-column-rank `A`.
pub fn lstsq(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Mat<C64> {
    use faer::linalg::solvers::SolveLstsq;
    a.qr().solve_lstsq(b)
}

/// Cholesky factor of a Hermitian positive definite matrix, used for repeated solves.
pub struct HpdSolver {
    llt: faer::linalg::solvers::Llt<C64>,
}

impl HpdSolver {
    pub fn new(h: MatRef<'_, C64>) -> Result<Self> {
        let llt = h
            .llt(Side::Lower)
            .map_err(|e| Error::Numerical(format!("cholesky failed: {e:?}")))?;
        Ok(Self { llt })
    }

    pub fn solve_vec(&self, rhs: &[C64]) -> Vec<C64> {
        let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = self.llt.solve(&b);
        col_to_vec(x.as_ref(), 0)
    }
}

/// Wrap a frequency (cycles) into `[-1/2, 1/2)`.
pub fn wrap_freq(f: f64) -> f64 {
    let w = f - f.floor();
    if w >= 0.5 {
        w - 1.0
    } else {
        w
    }
}

/// Wrap-around distance between two frequencies on the unit circle (cycles).
pub fn freq_distance(a: f64, b: f64) -> f64 {
    wrap_freq(a - b).abs()
}
