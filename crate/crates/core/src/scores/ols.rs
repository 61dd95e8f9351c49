//! Ordinary least squares with an intercept, solved by Householder QR.

use nalgebra::{DMatrix, DVector};

use super::logistic::{expand, varying_columns};
use crate::error::{CateError, Result};

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
}

/// Minimize `sum_i (y_i - intercept - x_i * slopes)^2`.
///
/// Refuses rank-deficient designs (including `rows <= columns`).
pub fn fit_ols(x: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit> {
    let n = x.nrows();
    if n != y.len() {
        return Err(CateError::InvalidData("outcome length does not match rows".into()));
    }
    let keep = varying_columns(x);
    let p = keep.len() + 1;
    if n <= keep.len() {
        return Err(CateError::RankDeficient {
            context: format!("least squares with {n} rows and {} covariates", x.ncols()),
        });
    }
    let a = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x[(i, keep[j - 1])] });
    let qr = a.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..p).map(|j| r[(j, j)].abs()).collect();
    let scale = diag.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 || diag.iter().any(|&v| v <= 1e-10 * scale) {
        return Err(CateError::RankDeficient {
            context: "least-squares design".into(),
        });
    }
    let qtb = qr.q().tr_mul(&DVector::from_column_slice(y));
    let w = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| CateError::Numerical("triangular solve failed".into()))?;
    Ok(OlsFit {
        intercept: w[0],
        slopes: expand(&w.as_slice()[1..], &keep, x.ncols()),
    })
}
