//! Thin wrappers over faer for the handful of dense operations the crate needs.

use faer::linalg::solvers::DenseSolveCore;
use faer::MatRef;

use crate::{CMat, Error, Result, C64};

/// Eigenvalues and unit-normalized right eigenvectors (columns).
pub fn eig_right(a: MatRef<'_, C64>) -> Result<(Vec<C64>, CMat)> {
    if a.nrows() == 0 {
        return Ok((Vec::new(), CMat::zeros(0, 0)));
    }
    let evd = a
        .eigen()
        .map_err(|e| Error::EigensolveFailure(format!("{e:?}")))?;
    let n = a.nrows();
    let values: Vec<C64> = (0..n).map(|i| evd.S()[i]).collect();
    let mut vectors = evd.U().to_owned();
    normalize_columns(&mut vectors);
    Ok((values, vectors))
}

/// Eigenvalues only.
pub fn eigenvalues(a: MatRef<'_, C64>) -> Result<Vec<C64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    a.eigenvalues()
        .map_err(|e| Error::EigensolveFailure(format!("{e:?}")))
}

/// Singular values in descending order.
pub fn singular_values(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    let mut s = a
        .singular_values()
        .map_err(|e| Error::EigensolveFailure(format!("{e:?}")))?;
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Orthonormal basis of the numerical kernel: right singular vectors whose
/// singular value is below `tol`.
pub fn null_space(a: MatRef<'_, C64>, tol: f64) -> Result<CMat> {
    let n = a.ncols();
    let svd = a
        .svd()
        .map_err(|e| Error::EigensolveFailure(format!("{e:?}")))?;
    let s = svd.S();
    let v = svd.V();
    let keep: Vec<usize> = (0..n)
        .filter(|&i| i >= a.nrows().min(n) || s[i].re < tol)
        .collect();
    Ok(CMat::from_fn(n, keep.len(), |r, c| v[(r, keep[c])]))
}

/// Numerical rank with an absolute singular value cutoff.
pub fn rank(a: MatRef<'_, C64>, tol: f64) -> Result<usize> {
    Ok(singular_values(a)?.iter().filter(|&&s| s > tol).count())
}

pub fn inverse(a: MatRef<'_, C64>) -> CMat {
    a.partial_piv_lu().inverse()
}

pub fn determinant(a: MatRef<'_, C64>) -> C64 {
    if a.nrows() == 0 {
        return C64::new(1.0, 0.0);
    }
    a.determinant()
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Largest entry modulus.
pub fn max_abs(a: MatRef<'_, C64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn normalize_columns(a: &mut CMat) {
    for j in 0..a.ncols() {
        let n = a.col(j).norm_l2();
        if n > 0.0 {
            for i in 0..a.nrows() {
                a[(i, j)] /= n;
            }
        }
    }
}

/// A − z·I.
pub fn shifted(a: MatRef<'_, C64>, z: C64) -> CMat {
    let mut out = a.to_owned();
    for i in 0..a.nrows() {
        out[(i, i)] -= z;
    }
    out
}

/// Principal square root of a real number viewed as complex.
pub fn csqrt(x: f64) -> C64 {
    C64::new(x, 0.0).sqrt()
}

/// Euclidean inner product ⟨x|y⟩ = Σ x̄_i y_i.
pub fn inner(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

/// Bilinear pairing Σ x_i y_i, used for left covectors against right vectors.
pub fn pair(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn col_vec(a: MatRef<'_, C64>, j: usize) -> Vec<C64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

pub fn row_vec(a: MatRef<'_, C64>, i: usize) -> Vec<C64> {
    (0..a.ncols()).map(|j| a[(i, j)]).collect()
}

/// Matrix-vector product.
pub fn apply(a: MatRef<'_, C64>, x: &[C64]) -> Vec<C64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
        .collect()
}

/// Covector-matrix product xᵀA.
pub fn apply_left(x: &[C64], a: MatRef<'_, C64>) -> Vec<C64> {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| x[i] * a[(i, j)]).sum())
        .collect()
}

/// Largest distance after greedily pairing each value of `a` with its
/// nearest unused value of `b`. Adequate for multisets whose mismatch is
/// far below their internal separations; infinite on length mismatch.
pub fn match_spectra(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("lengths agree");
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}
