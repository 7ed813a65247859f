//! Small dense helpers shared by the reduction and evaluation code.

use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};

pub fn to_complex(m: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}

pub fn real_part(m: MatRef<'_, c64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re)
}

pub fn imag_part(m: MatRef<'_, c64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].im)
}

pub fn max_abs_imag(m: MatRef<'_, c64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].im.abs());
        }
    }
    out
}

pub fn is_finite(m: MatRef<'_, f64>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].is_finite()))
}

pub fn frobenius(m: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)] * m[(i, j)];
        }
    }
    s.sqrt()
}

pub fn singular_values(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    m.singular_values()
        .map_err(|e| Error::Numerical(format!("singular values: {e:?}")))
}

pub fn spectral_norm(m: MatRef<'_, f64>) -> Result<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    // only the top value is needed, so the gram matrix is accurate enough for tall blocks
    if m.nrows() > 4 * m.ncols() {
        let g = m.transpose() * m;
        let ev = g
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|e| Error::Numerical(format!("gram eigenvalues: {e:?}")))?;
        return Ok(ev.into_iter().fold(0.0f64, f64::max).sqrt());
    }
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

pub fn spectral_norm_complex(m: MatRef<'_, c64>) -> Result<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    let sv = m
        .singular_values()
        .map_err(|e| Error::Numerical(format!("singular values: {e:?}")))?;
    Ok(sv.first().copied().unwrap_or(0.0))
}

/// Inverse of a small complex matrix with a condition-number estimate from its singular values.
pub fn complex_inverse(m: MatRef<'_, c64>) -> Result<(Mat<c64>, f64)> {
    use faer::linalg::solvers::DenseSolveCore;
    let sv = m
        .singular_values()
        .map_err(|e| Error::Numerical(format!("singular values: {e:?}")))?;
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let inv = m.partial_piv_lu().inverse();
    Ok((inv, cond))
}

/// Real square matrix times a complex matrix.
pub fn real_times_complex(a: MatRef<'_, f64>, z: MatRef<'_, c64>) -> Mat<c64> {
    let re = a * real_part(z);
    let im = a * imag_part(z);
    Mat::from_fn(re.nrows(), re.ncols(), |i, j| c64::new(re[(i, j)], im[(i, j)]))
}

pub fn complex_times_real(z: MatRef<'_, c64>, a: MatRef<'_, f64>) -> Mat<c64> {
    let re = real_part(z) * a;
    let im = imag_part(z) * a;
    Mat::from_fn(re.nrows(), re.ncols(), |i, j| c64::new(re[(i, j)], im[(i, j)]))
}
