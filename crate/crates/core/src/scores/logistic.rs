//! Unpenalized logistic regression by damped Newton (IRLS).
//!
//! Objective: `sum_i softplus(eta_i) - z_i * eta_i + ridge/2 * |slopes|^2`
//! with `eta = intercept + x * slopes`. The intercept is never penalized.

use nalgebra::{DMatrix, DVector};

use crate::error::{CateError, Result};

pub const MAX_ITER: usize = 100;
pub const GRAD_TOL: f64 = 1e-8;
/// Ridge used when the unpenalized fit shows signs of separation.
pub const SEPARATION_RIDGE: f64 = 1e-6;
const LINEAR_PREDICTOR_LIMIT: f64 = 30.0;
const SEPARATION_FRACTION: f64 = 0.10;
const MAX_HALVINGS: usize = 40;

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the fit fell back to the ridge-stabilized solver.
    pub separation: bool,
    pub ridge: f64,
    pub gradient_max_norm: f64,
    /// Objective value after each accepted iteration (first entry is the start).
    pub objective_trace: Vec<f64>,
}

fn linear_predictor(x: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
    let d = x.ncols();
    let mut eta = x * w.rows(1, d);
    eta.add_scalar_mut(w[0]);
    eta
}

/// Penalized negative log-likelihood at parameter vector `w = (intercept, slopes)`.
pub fn objective(x: &DMatrix<f64>, z: &[f64], w: &[f64], ridge: f64) -> f64 {
    let wv = DVector::from_column_slice(w);
    let eta = linear_predictor(x, &wv);
    let nll: f64 = eta.iter().zip(z).map(|(&e, &zi)| softplus(e) - zi * e).sum();
    nll + 0.5 * ridge * w[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Analytic gradient of [`objective`].
pub fn gradient(x: &DMatrix<f64>, z: &[f64], w: &[f64], ridge: f64) -> Vec<f64> {
    let wv = DVector::from_column_slice(w);
    let eta = linear_predictor(x, &wv);
    let resid = DVector::from_iterator(eta.len(), eta.iter().zip(z).map(|(&e, &zi)| sigmoid(e) - zi));
    let mut g = Vec::with_capacity(w.len());
    g.push(resid.sum());
    let gs = x.tr_mul(&resid);
    for j in 0..x.ncols() {
        g.push(gs[j] + ridge * w[j + 1]);
    }
    g
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, g| m.max(g.abs()))
}

/// Fails with [`CateError::RankDeficient`] when `[1, x]` lacks full column rank.
pub(crate) fn check_full_rank(x: &DMatrix<f64>, context: &str) -> Result<()> {
    let n = x.nrows();
    let p = x.ncols() + 1;
    if n < p {
        return Err(CateError::RankDeficient {
            context: format!("{context}: {n} rows for {p} parameters"),
        });
    }
    let a = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let r = a.qr().r();
    let diag: Vec<f64> = (0..p).map(|j| r[(j, j)].abs()).collect();
    let scale = diag.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 || diag.iter().any(|&v| v <= 1e-10 * scale) {
        return Err(CateError::RankDeficient {
            context: context.to_string(),
        });
    }
    Ok(())
}

fn newton(x: &DMatrix<f64>, z: &[f64], ridge: f64) -> (LogisticFit, bool) {
    let n = x.nrows();
    let d = x.ncols();
    let p = d + 1;
    let mut w = DVector::<f64>::zeros(p);
    let mut obj = objective(x, z, w.as_slice(), ridge);
    let mut trace = vec![obj];
    let mut iterations = 0;
    let mut converged = false;
    let mut diverging = false;

    for it in 0..MAX_ITER {
        let g = gradient(x, z, w.as_slice(), ridge);
        let g_max = max_abs(&g);
        if g_max < GRAD_TOL {
            converged = true;
            break;
        }
        iterations = it + 1;
        let eta = linear_predictor(x, &w);
        let mut h = DMatrix::<f64>::zeros(p, p);
        // Hessian: [1 x]^T W [1 x]
        let weights: Vec<f64> = eta.iter().map(|&e| {
            let s = sigmoid(e);
            s * (1.0 - s)
        }).collect();
        let mut xw = x.clone();
        for j in 0..d {
            for i in 0..n {
                xw[(i, j)] *= weights[i];
            }
        }
        let wsum: f64 = weights.iter().sum();
        h[(0, 0)] = wsum;
        let col_w = xw.row_sum();
        for j in 0..d {
            h[(0, j + 1)] = col_w[j];
            h[(j + 1, 0)] = col_w[j];
        }
        let xtwx = x.tr_mul(&xw);
        for a in 0..d {
            for b in 0..d {
                h[(a + 1, b + 1)] = xtwx[(a, b)];
            }
            h[(a + 1, a + 1)] += ridge;
        }
        let step = match h.cholesky() {
            Some(ch) => ch.solve(&DVector::from_vec(g)),
            None => {
                diverging = true;
                break;
            }
        };

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand = &w - &step * t;
            let cand_obj = objective(x, z, cand.as_slice(), ridge);
            // Near the optimum the objective is flat to rounding; there a
            // step counts as progress only if it shrinks the gradient.
            let flat = cand_obj.is_finite()
                && cand_obj <= obj + 16.0 * f64::EPSILON * obj.abs()
                && max_abs(&gradient(x, z, cand.as_slice(), ridge)) < g_max;
            if (cand_obj.is_finite() && cand_obj < obj) || flat {
                w = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        trace.push(obj);
        if !accepted {
            break;
        }

        let eta = linear_predictor(x, &w);
        let extreme = eta.iter().filter(|e| e.abs() > LINEAR_PREDICTOR_LIMIT).count();
        if ridge == 0.0 && extreme as f64 >= SEPARATION_FRACTION * n as f64 {
            diverging = true;
            break;
        }
    }
    let g = gradient(x, z, w.as_slice(), ridge);
    let gmax = max_abs(&g);
    converged = converged || gmax < GRAD_TOL;
    let fit = LogisticFit {
        intercept: w[0],
        slopes: w.as_slice()[1..].to_vec(),
        iterations,
        converged,
        separation: false,
        ridge,
        gradient_max_norm: gmax,
        objective_trace: trace,
    };
    (fit, diverging)
}

/// Fit `P(z = 1 | x) = sigmoid(intercept + x * slopes)`.
///
/// On detected separation the ridge-stabilized solver is used instead and
/// the `separation` flag is set; the returned coefficients are then the
/// capped-iteration ridge fit.
pub fn fit_logistic(x: &DMatrix<f64>, z: &[f64]) -> Result<LogisticFit> {
    if x.nrows() != z.len() {
        return Err(CateError::InvalidData("label length does not match rows".into()));
    }
    if z.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(CateError::InvalidData("logistic labels must be 0 or 1".into()));
    }
    let keep = varying_columns(x);
    let xs = x.select_columns(keep.iter());
    check_full_rank(&xs, "logistic design")?;
    let (fit, diverging) = newton(&xs, z, 0.0);
    let mut fit = if diverging {
        let (mut fit, _) = newton(&xs, z, SEPARATION_RIDGE);
        fit.separation = true;
        fit
    } else {
        fit
    };
    fit.slopes = expand(&fit.slopes, &keep, x.ncols());
    Ok(fit)
}

/// Columns that are not constant. Constant columns are absorbed by the
/// intercept and get a zero coefficient.
pub(crate) fn varying_columns(x: &DMatrix<f64>) -> Vec<usize> {
    (0..x.ncols())
        .filter(|&j| {
            let col = x.column(j);
            let first = col[0];
            col.iter().any(|&v| v != first)
        })
        .collect()
}

pub(crate) fn expand(values: &[f64], keep: &[usize], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for (v, &j) in values.iter().zip(keep) {
        out[j] = *v;
    }
    out
}
