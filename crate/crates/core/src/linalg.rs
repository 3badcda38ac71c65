//! Thin wrappers around the dense complex backend.
//!
//! Every spectral computation in the crate goes through [`eigh`] or [`svd`];
//! there are no iterative solvers.

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Mat<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn zeros(n: usize, m: usize) -> CMat {
    Mat::zeros(n, m)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
}

pub fn diagonal(values: &[C64]) -> CMat {
    let n = values.len();
    Mat::from_fn(n, n, |i, j| if i == j { values[i] } else { C64::new(0.0, 0.0) })
}

pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    a * b
}

/// Largest entry modulus.
pub fn max_abs(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn frobenius(a: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn sub(a: &CMat, b: &CMat) -> CMat {
    a - b
}

/// max |A - A^dagger|, zero for Hermitian input.
pub fn hermiticity_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut m = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

/// max |U U^dagger - 1|.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let p = u * u.adjoint();
    let n = p.nrows();
    let mut m = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            m = m.max((p[(i, j)] - C64::new(target, 0.0)).norm());
        }
    }
    m
}

/// Hermitian eigendecomposition with eigenvalues ascending.
pub fn eigh(h: &CMat) -> Result<(Vec<f64>, CMat)> {
    if h.nrows() == 0 {
        return Ok((Vec::new(), zeros(0, 0)));
    }
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
    let vals = evd.S().column_vector().iter().map(|z| z.re).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn eigvalsh(h: &CMat) -> Result<Vec<f64>> {
    if h.nrows() == 0 {
        return Ok(Vec::new());
    }
    h.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("{e:?}")))
}

/// Full SVD `A = U S V^dagger`, singular values descending.
pub struct Svd {
    pub values: Vec<f64>,
    pub u: CMat,
    pub v: CMat,
}

pub fn svd(a: &CMat) -> Result<Svd> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Svd { values: Vec::new(), u: identity(a.nrows()), v: identity(a.ncols()) });
    }
    let s = a.svd().map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
    Ok(Svd {
        values: s.S().column_vector().iter().map(|z| z.re).collect(),
        u: s.U().to_owned(),
        v: s.V().to_owned(),
    })
}

pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values().map_err(|e| Error::LinearAlgebra(format!("{e:?}")))
}

pub fn spectral_norm(a: &CMat) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

/// `V diag(f(lambda)) V^dagger` from an eigendecomposition.
pub fn spectral_function(vals: &[f64], vecs: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let n = vecs.nrows();
    let weights: Vec<C64> = vals.iter().map(|&l| f(l)).collect();
    let scaled = Mat::from_fn(n, vals.len(), |i, k| vecs[(i, k)] * weights[k]);
    &scaled * vecs.adjoint()
}

/// Columns `cols` of `a` as a new matrix.
pub fn select_columns(a: &CMat, cols: &[usize]) -> CMat {
    Mat::from_fn(a.nrows(), cols.len(), |i, k| a[(i, cols[k])])
}

pub fn select_rows(a: &CMat, rows: &[usize]) -> CMat {
    Mat::from_fn(rows.len(), a.ncols(), |k, j| a[(rows[k], j)])
}

pub fn submatrix(a: &CMat, rows: &[usize], cols: &[usize]) -> CMat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn trace(a: &CMat) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// Block diagonal sum `A ⊕ B`.
pub fn direct_sum(a: &CMat, b: &CMat) -> CMat {
    let (n, m) = (a.nrows(), b.nrows());
    Mat::from_fn(n + m, n + m, |i, j| {
        if i < n && j < n {
            a[(i, j)]
        } else if i >= n && j >= n {
            b[(i - n, j - n)]
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Pauli matrices in the order (identity, x, y, z).
pub fn pauli(k: usize) -> CMat {
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let entries = match k {
        0 => [o, z, z, o],
        1 => [z, o, o, z],
        2 => [z, -I, I, z],
        3 => [o, z, z, -o],
        _ => panic!("pauli index out of range"),
    };
    Mat::from_fn(2, 2, |i, j| entries[2 * i + j])
}

pub fn scale(a: &CMat, s: C64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn from_real(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> CMat {
    Mat::from_fn(rows, cols, |i, j| C64::new(f(i, j), 0.0))
}
