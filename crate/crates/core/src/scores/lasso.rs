//! Lasso-penalized least squares and logistic regression.
//!
//! Columns are standardized to zero mean and unit (population) variance
//! before fitting; coefficients are reported on the original scale. The
//! intercept is never penalized. Objectives on the standardized design:
//!
//! * least squares: `1/(2n) * |y - b0 - Xs b|^2 + lambda * |b|_1`
//! * logistic: `1/n * sum(softplus(eta) - z * eta) + lambda * |b|_1`
//!
//! Both are solved by cyclic coordinate descent with an active set; the
//! logistic loss is handled by proximal Newton steps (a weighted
//! least-squares lasso per outer iteration) with step halving.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::logistic::{sigmoid, softplus};
use crate::error::{CateError, Result};
use crate::seed::labeled_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Convergence threshold on the largest coefficient change.
    pub tol: f64,
    pub max_sweeps: usize,
    pub max_outer: usize,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    /// Stop the path once this fraction of deviance is explained.
    pub max_dev_ratio: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-6,
            max_sweeps: 100_000,
            max_outer: 100,
            n_lambda: 100,
            lambda_min_ratio: 1e-3,
            max_dev_ratio: 0.999,
        }
    }
}

const MIN_WEIGHT: f64 = 1e-5;

/// Column-standardized copy of a design matrix.
#[derive(Debug, Clone)]
pub struct Standardized {
    n: usize,
    d: usize,
    /// Indices of non-constant columns; only these are fitted.
    pub keep: Vec<usize>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    cols: Vec<f64>,
}

impl Standardized {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let n = x.nrows();
        let d = x.ncols();
        let mut keep = Vec::new();
        let mut mean = Vec::new();
        let mut scale = Vec::new();
        let mut cols = Vec::new();
        for j in 0..d {
            let col = x.column(j);
            let mu = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if sd <= 1e-12 * (1.0 + mu.abs()) {
                continue;
            }
            keep.push(j);
            mean.push(mu);
            scale.push(sd);
            cols.extend(col.iter().map(|v| (v - mu) / sd));
        }
        Standardized { n, d, keep, mean, scale, cols }
    }

    pub fn m(&self) -> usize {
        self.keep.len()
    }

    pub fn col(&self, k: usize) -> &[f64] {
        &self.cols[k * self.n..(k + 1) * self.n]
    }

    /// Map a standardized-scale fit back to `(intercept, slopes)` on the original columns.
    pub fn to_original(&self, b0: f64, beta: &[f64]) -> (f64, Vec<f64>) {
        let mut slopes = vec![0.0; self.d];
        let mut intercept = b0;
        for (k, &j) in self.keep.iter().enumerate() {
            let b = beta[k] / self.scale[k];
            slopes[j] = b;
            intercept -= b * self.mean[k];
        }
        (intercept, slopes)
    }

    fn linear_predictor(&self, b0: f64, beta: &[f64]) -> Vec<f64> {
        let mut eta = vec![b0; self.n];
        for (k, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (e, v) in eta.iter_mut().zip(self.col(k)) {
                    *e += b * v;
                }
            }
        }
        eta
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l1(beta: &[f64]) -> f64 {
    beta.iter().map(|b| b.abs()).sum()
}

/// Smallest lambda at which every penalized coefficient is zero. The
/// least-squares and logistic losses share the same gradient at the
/// intercept-only optimum, so one formula serves both.
pub fn lambda_max(x: &DMatrix<f64>, y: &[f64]) -> f64 {
    let s = Standardized::new(x);
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let centered: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    (0..s.m())
        .map(|k| dot(s.col(k), &centered).abs() / n)
        .fold(0.0, f64::max)
}

/// `n_lambda` log-spaced values from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, n_lambda: usize, ratio: f64) -> Vec<f64> {
    let top = if lambda_max > 0.0 { lambda_max } else { 1e-8 };
    if n_lambda <= 1 {
        return vec![top];
    }
    (0..n_lambda)
        .map(|k| top * ratio.powf(k as f64 / (n_lambda - 1) as f64))
        .collect()
}

/// One fitted point on a regularization path.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub lambda: f64,
    /// Intercept on the standardized scale.
    pub b0: f64,
    /// Coefficients on the standardized scale (length = kept columns).
    pub beta_std: Vec<f64>,
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub converged: bool,
    /// Penalized objective after each sweep (least squares) or outer step (logistic).
    pub objective_trace: Vec<f64>,
}

impl PathPoint {
    pub fn nonzero(&self) -> usize {
        self.beta_std.iter().filter(|b| **b != 0.0).count()
    }
}

#[derive(Debug, Clone)]
pub struct PathFit {
    pub family: Family,
    pub standardized: Standardized,
    pub points: Vec<PathPoint>,
}

fn validate_grid(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(CateError::param("lambda_grid", "must not be empty"));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(CateError::param("lambda_grid", "values must be finite and non-negative"));
    }
    if lambdas.windows(2).any(|w| w[1] > w[0]) {
        return Err(CateError::param("lambda_grid", "must be sorted in descending order"));
    }
    Ok(())
}

fn gaussian_objective(resid: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = resid.len() as f64;
    dot(resid, resid) / (2.0 * n) + lambda * l1(beta)
}

/// Coordinate descent for the least-squares lasso on a fixed lambda.
/// `resid` must equal `y - b0 - Xs beta` on entry and is kept in sync.
fn gaussian_cd(
    s: &Standardized,
    lambda: f64,
    beta: &mut [f64],
    resid: &mut [f64],
    opts: &LassoOptions,
    trace: &mut Vec<f64>,
) -> bool {
    let n = s.n as f64;
    let m = s.m();
    let mut sweeps = 0;
    loop {
        // full sweep
        let mut max_change = 0.0f64;
        for k in 0..m {
            max_change = max_change.max(update_gaussian(s, k, lambda, beta, resid, n));
        }
        sweeps += 1;
        trace.push(gaussian_objective(resid, beta, lambda));
        if max_change < opts.tol {
            return true;
        }
        // active-set sweeps
        loop {
            let active: Vec<usize> = (0..m).filter(|&k| beta[k] != 0.0).collect();
            let mut max_change = 0.0f64;
            for &k in &active {
                max_change = max_change.max(update_gaussian(s, k, lambda, beta, resid, n));
            }
            sweeps += 1;
            trace.push(gaussian_objective(resid, beta, lambda));
            if max_change < opts.tol || sweeps >= opts.max_sweeps {
                break;
            }
        }
        if sweeps >= opts.max_sweeps {
            return false;
        }
    }
}

fn update_gaussian(s: &Standardized, k: usize, lambda: f64, beta: &mut [f64], resid: &mut [f64], n: f64) -> f64 {
    let col = s.col(k);
    let old = beta[k];
    let rho = dot(col, resid) / n + old;
    let new = soft_threshold(rho, lambda);
    let delta = new - old;
    if delta != 0.0 {
        beta[k] = new;
        for (r, v) in resid.iter_mut().zip(col) {
            *r -= delta * v;
        }
    }
    delta.abs()
}

fn binomial_objective(eta: &[f64], z: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = z.len() as f64;
    let nll: f64 = eta.iter().zip(z).map(|(&e, &zi)| softplus(e) - zi * e).sum();
    nll / n + lambda * l1(beta)
}

/// Weighted least-squares lasso with an unpenalized intercept; used as the
/// inner problem of the proximal Newton iteration.
fn weighted_cd(
    s: &Standardized,
    lambda: f64,
    w: &[f64],
    b0: &mut f64,
    beta: &mut [f64],
    resid: &mut [f64],
    opts: &LassoOptions,
) {
    let n = s.n as f64;
    let m = s.m();
    let wsum: f64 = w.iter().sum();
    let v: Vec<f64> = (0..m)
        .map(|k| s.col(k).iter().zip(w).map(|(x, wi)| wi * x * x).sum::<f64>() / n)
        .collect();
    let tol = opts.tol * 0.1;
    let update = |k: usize, beta: &mut [f64], resid: &mut [f64]| -> f64 {
        let col = s.col(k);
        let old = beta[k];
        let g: f64 = col.iter().zip(w).zip(resid.iter()).map(|((x, wi), r)| wi * x * r).sum::<f64>() / n;
        let new = soft_threshold(g + v[k] * old, lambda) / v[k];
        let delta = new - old;
        if delta != 0.0 {
            beta[k] = new;
            for (r, x) in resid.iter_mut().zip(col) {
                *r -= delta * x;
            }
        }
        // change measured in curvature units so near-separable fits with
        // tiny weights do not stall on coefficient drift
        v[k].sqrt() * delta.abs()
    };
    let update_b0 = |b0: &mut f64, resid: &mut [f64]| -> f64 {
        let delta = dot(w, resid) / wsum;
        *b0 += delta;
        for r in resid.iter_mut() {
            *r -= delta;
        }
        (wsum / n).sqrt() * delta.abs()
    };
    let mut sweeps = 0;
    loop {
        let mut max_change = update_b0(b0, resid);
        for k in 0..m {
            max_change = max_change.max(update(k, beta, resid));
        }
        sweeps += 1;
        if max_change < tol || sweeps >= opts.max_sweeps {
            return;
        }
        loop {
            let active: Vec<usize> = (0..m).filter(|&k| beta[k] != 0.0).collect();
            let mut max_change = update_b0(b0, resid);
            for &k in &active {
                max_change = max_change.max(update(k, beta, resid));
            }
            sweeps += 1;
            if max_change < tol || sweeps >= opts.max_sweeps {
                break;
            }
        }
        if sweeps >= opts.max_sweeps {
            return;
        }
    }
}

/// Fit the lasso along a descending lambda grid with warm starts.
///
/// The path stops early once the explained-deviance fraction exceeds
/// `opts.max_dev_ratio`; `points` may therefore be shorter than `lambdas`.
pub fn fit_path(family: Family, x: &DMatrix<f64>, y: &[f64], lambdas: &[f64], opts: &LassoOptions) -> Result<PathFit> {
    validate_grid(lambdas)?;
    if x.nrows() != y.len() {
        return Err(CateError::InvalidData("response length does not match rows".into()));
    }
    if x.nrows() < 2 {
        return Err(CateError::InvalidData("lasso needs at least 2 rows".into()));
    }
    if family == Family::Binomial && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(CateError::InvalidData("logistic labels must be 0 or 1".into()));
    }
    let s = Standardized::new(x);
    let n = y.len();
    let m = s.m();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut points = Vec::with_capacity(lambdas.len());
    let mut beta = vec![0.0; m];

    match family {
        Family::Gaussian => {
            let tss: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
            let mut resid: Vec<f64> = y.iter().map(|v| v - ybar).collect();
            for &lambda in lambdas {
                let mut trace = vec![gaussian_objective(&resid, &beta, lambda)];
                let converged = gaussian_cd(&s, lambda, &mut beta, &mut resid, opts, &mut trace);
                let (intercept, slopes) = s.to_original(ybar, &beta);
                points.push(PathPoint {
                    lambda,
                    b0: ybar,
                    beta_std: beta.clone(),
                    intercept,
                    slopes,
                    converged,
                    objective_trace: trace,
                });
                let rss = dot(&resid, &resid);
                if tss > 0.0 && 1.0 - rss / tss > opts.max_dev_ratio {
                    break;
                }
            }
        }
        Family::Binomial => {
            if ybar == 0.0 || ybar == 1.0 {
                return Err(CateError::InvalidData("logistic lasso needs both classes".into()));
            }
            let mut b0 = (ybar / (1.0 - ybar)).ln();
            let null_dev: f64 = 2.0 * y.iter().map(|&zi| softplus(b0) - zi * b0).sum::<f64>();
            for &lambda in lambdas {
                let mut eta = s.linear_predictor(b0, &beta);
                let mut obj = binomial_objective(&eta, y, &beta, lambda);
                let mut trace = vec![obj];
                let mut converged = false;
                for _ in 0..opts.max_outer {
                    let mut w = Vec::with_capacity(n);
                    let mut resid = Vec::with_capacity(n);
                    for (e, &zi) in eta.iter().zip(y) {
                        let p = sigmoid(*e);
                        let wi = (p * (1.0 - p)).max(MIN_WEIGHT);
                        w.push(wi);
                        resid.push((zi - p) / wi);
                    }
                    let mut nb0 = b0;
                    let mut nbeta = beta.clone();
                    weighted_cd(&s, lambda, &w, &mut nb0, &mut nbeta, &mut resid, opts);

                    let mut t = 1.0;
                    let mut accepted = None;
                    for _ in 0..30 {
                        let cb0 = b0 + t * (nb0 - b0);
                        let cbeta: Vec<f64> = beta.iter().zip(&nbeta).map(|(o, nw)| o + t * (nw - o)).collect();
                        let ceta = s.linear_predictor(cb0, &cbeta);
                        let cobj = binomial_objective(&ceta, y, &cbeta, lambda);
                        if cobj <= obj {
                            accepted = Some((cb0, cbeta, ceta, cobj));
                            break;
                        }
                        t *= 0.5;
                    }
                    let Some((cb0, cbeta, ceta, cobj)) = accepted else {
                        // no decrease possible: already optimal to rounding
                        converged = true;
                        break;
                    };
                    let change = beta
                        .iter()
                        .zip(&cbeta)
                        .map(|(a, b)| (a - b).abs())
                        .fold((b0 - cb0).abs(), f64::max);
                    b0 = cb0;
                    beta = cbeta;
                    eta = ceta;
                    obj = cobj;
                    trace.push(obj);
                    if change < opts.tol {
                        converged = true;
                        break;
                    }
                }
                let (intercept, slopes) = s.to_original(b0, &beta);
                points.push(PathPoint {
                    lambda,
                    b0,
                    beta_std: beta.clone(),
                    intercept,
                    slopes,
                    converged,
                    objective_trace: trace,
                });
                let dev: f64 = 2.0 * eta.iter().zip(y).map(|(&e, &zi)| softplus(e) - zi * e).sum::<f64>();
                if null_dev > 0.0 && 1.0 - dev / null_dev > opts.max_dev_ratio {
                    break;
                }
            }
        }
    }
    Ok(PathFit {
        family,
        standardized: s,
        points,
    })
}

/// Fold label for each row. Rows are shuffled and dealt round-robin; when
/// `strata` is given each stratum is dealt separately so every fold sees
/// both classes whenever a class has at least `folds` members.
pub fn assign_folds(n: usize, folds: usize, strata: Option<&[f64]>, seed: u64, label: &str) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(CateError::param("folds", format!("need at least 2, got {folds}")));
    }
    if folds > n {
        return Err(CateError::param("folds", format!("{folds} folds for {n} rows")));
    }
    let mut rng = labeled_rng(seed, label);
    let mut out = vec![0; n];
    let groups: Vec<Vec<usize>> = match strata {
        Some(s) => {
            let mut zeros: Vec<usize> = (0..n).filter(|&i| s[i] == 0.0).collect();
            let mut ones: Vec<usize> = (0..n).filter(|&i| s[i] != 0.0).collect();
            zeros.shuffle(&mut rng);
            ones.shuffle(&mut rng);
            vec![zeros, ones]
        }
        None => {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            vec![all]
        }
    };
    let mut next = 0;
    for g in groups {
        for i in g {
            out[i] = next % folds;
            next += 1;
        }
    }
    Ok(out)
}

/// Cross-validation record along the lambda grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPath {
    pub lambdas: Vec<f64>,
    /// Mean held-out loss (squared error or binomial deviance) per lambda.
    pub cv_error: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub nonzero: Vec<usize>,
    pub selected: usize,
    pub folds: usize,
}

#[derive(Debug, Clone)]
pub struct CvLassoFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub lambda: f64,
    pub cv: CvPath,
    pub path: PathFit,
}

fn held_out_loss(family: Family, eta: f64, y: f64) -> f64 {
    match family {
        Family::Gaussian => (y - eta) * (y - eta),
        Family::Binomial => 2.0 * (softplus(eta) - y * eta),
    }
}

/// Fit the full path, pick lambda by K-fold CV (minimum mean held-out loss,
/// ties to the larger lambda) and return the full-data fit at that lambda.
pub fn cv_lasso(
    family: Family,
    x: &DMatrix<f64>,
    y: &[f64],
    lambdas: &[f64],
    folds: usize,
    seed: u64,
    label: &str,
    opts: &LassoOptions,
) -> Result<CvLassoFit> {
    validate_grid(lambdas)?;
    let n = y.len();
    let strata = (family == Family::Binomial).then_some(y);
    let degenerate = |assign: &[usize]| -> bool {
        family == Family::Binomial
            && (0..folds).any(|f| {
                let train: Vec<f64> = (0..n).filter(|&i| assign[i] != f).map(|i| y[i]).collect();
                train.iter().all(|&v| v == 0.0) || train.iter().all(|&v| v == 1.0)
            })
    };
    let mut assign = assign_folds(n, folds, strata, seed, label)?;
    if degenerate(&assign) {
        assign = assign_folds(n, folds, strata, seed, &format!("{label}-reshuffle"))?;
        if degenerate(&assign) {
            return Err(CateError::InvalidData(
                "cross-validation fold has a single-class training set".into(),
            ));
        }
    }

    let full = fit_path(family, x, y, lambdas, opts)?;
    let used = &lambdas[..full.points.len()];
    let mut losses = vec![vec![0.0; n]; used.len()];
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| assign[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| assign[i] == f).collect();
        let xt = x.select_rows(train.iter());
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let fold_path = fit_path(family, &xt, &yt, used, opts)?;
        for (k, loss_k) in losses.iter_mut().enumerate() {
            let pt = &fold_path.points[k.min(fold_path.points.len() - 1)];
            for &i in &test {
                let eta = pt.intercept + (0..x.ncols()).map(|j| pt.slopes[j] * x[(i, j)]).sum::<f64>();
                loss_k[i] = held_out_loss(family, eta, y[i]);
            }
        }
    }
    let mut cv_error = Vec::with_capacity(used.len());
    let mut cv_se = Vec::with_capacity(used.len());
    for l in &losses {
        let mean = l.iter().sum::<f64>() / n as f64;
        let var = l.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n.max(2) - 1) as f64;
        cv_error.push(mean);
        cv_se.push((var / n as f64).sqrt());
    }
    let mut selected = 0;
    for k in 1..cv_error.len() {
        if cv_error[k] < cv_error[selected] {
            selected = k;
        }
    }
    let pt = &full.points[selected];
    Ok(CvLassoFit {
        intercept: pt.intercept,
        slopes: pt.slopes.clone(),
        lambda: pt.lambda,
        cv: CvPath {
            lambdas: used.to_vec(),
            cv_error,
            cv_se,
            nonzero: full.points.iter().map(|p| p.nonzero()).collect(),
            selected,
            folds,
        },
        path: full,
    })
}
