//! Small dense helpers on top of nalgebra.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::contract(format!("{what} is not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// Symmetric positive-definite check returning the eigendecomposition.
pub fn spd_eigen(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::contract(format!("{what} must be a non-empty square matrix")));
    }
    check_symmetric(m, what)?;
    let e = SymmetricEigen::new(m.clone());
    if e.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::contract(format!("{what} is not positive definite")));
    }
    Ok(e)
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map(|x| x.len()).unwrap_or(0);
    if rows.iter().any(|x| x.len() != c) {
        return Err(Error::contract("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn dvec(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.amax()
}

/// Numerical rank with an absolute singular-value cutoff.
pub fn rank_abs(m: &DMatrix<f64>, cutoff: f64) -> usize {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .filter(|&&s| s > cutoff)
        .count()
}
