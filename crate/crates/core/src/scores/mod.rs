//! Propensity and prognostic score models.
//!
//! The propensity model is a logistic regression of the treatment indicator
//! on all covariates; the prognostic model is a least-squares regression of
//! the outcome on the covariates, fitted on the control arm only. Both carry
//! an unpenalized intercept. In high dimension each can be fitted with a
//! lasso penalty chosen by K-fold cross-validation.

pub mod lasso;
pub mod logistic;
pub mod ols;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ScoredSample};
use crate::error::{CateError, Result};
pub use lasso::{CvPath, Family, LassoOptions};
pub use logistic::sigmoid;

/// Propensity estimates are kept inside `[E_CLAMP, 1 - E_CLAMP]`.
pub const E_CLAMP: f64 = 1e-6;
pub const SCHEMA_VERSION: u32 = 1;

pub fn clamp_propensity(e: f64) -> f64 {
    e.clamp(E_CLAMP, 1.0 - E_CLAMP)
}

/// Intercept plus one slope per covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScore {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearScore {
    pub fn linear_predictor(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .fold(self.intercept, |acc, (j, b)| acc + b * x[(row, j)])
    }

    /// Indices of nonzero slopes.
    pub fn support(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrognosticLink {
    /// Least squares, as used for continuous and binary outcomes alike.
    #[default]
    Linear,
    /// Logistic regression on the control arm; binary outcomes only.
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Penalty {
    None,
    Lasso { lambda1: f64, lambda2: f64 },
}

/// Requested penalty; `Auto` picks lasso when `d >= n_control`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyMode {
    #[default]
    Auto,
    None,
    Lasso,
}

impl PenaltyMode {
    pub fn resolve(self, ds: &Dataset) -> PenaltyMode {
        match self {
            PenaltyMode::Auto if ds.d() >= ds.n_control() => PenaltyMode::Lasso,
            PenaltyMode::Auto => PenaltyMode::None,
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub iterations: usize,
    pub converged: bool,
    pub separation: bool,
    pub gradient_max_norm: Option<f64>,
    pub cv_path: Option<CvPath>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub propensity: SolverMeta,
    pub prognostic: SolverMeta,
}

/// Fitted propensity and prognostic models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub schema_version: u32,
    pub covariates: Vec<String>,
    pub propensity: LinearScore,
    pub prognostic: LinearScore,
    pub prognostic_link: PrognosticLink,
    pub penalty: Penalty,
    pub fit_meta: FitMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub penalty: PenaltyMode,
    pub prognostic_link: PrognosticLink,
    pub lasso: LassoOptions,
    pub lasso_folds: usize,
    /// Explicit lambda grids; `None` uses the default log-spaced grid.
    pub propensity_grid: Option<Vec<f64>>,
    pub prognostic_grid: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            penalty: PenaltyMode::Auto,
            prognostic_link: PrognosticLink::Linear,
            lasso: LassoOptions::default(),
            lasso_folds: 10,
            propensity_grid: None,
            prognostic_grid: None,
            seed: 0,
        }
    }
}

/// Unpenalized fit result for one score.
#[derive(Debug, Clone)]
pub struct ScoreFit {
    pub score: LinearScore,
    pub meta: SolverMeta,
    pub objective_trace: Vec<f64>,
}

/// Lasso fit result for one score.
#[derive(Debug, Clone)]
pub struct LassoScoreFit {
    pub score: LinearScore,
    pub lambda: f64,
    pub meta: SolverMeta,
    pub path: lasso::PathFit,
}

fn treatment_as_f64(ds: &Dataset) -> Vec<f64> {
    ds.z().iter().map(|&z| z as f64).collect()
}

fn control_rows(ds: &Dataset) -> (DMatrix<f64>, Vec<f64>) {
    let rows = ds.control_indices();
    let x = ds.x().select_rows(rows.iter());
    let y = rows.iter().map(|&i| ds.y()[i]).collect();
    (x, y)
}

/// Logistic regression of the treatment indicator on all covariates.
pub fn fit_propensity(ds: &Dataset) -> Result<ScoreFit> {
    let z = treatment_as_f64(ds);
    let fit = logistic::fit_logistic(ds.x(), &z)?;
    Ok(ScoreFit {
        score: LinearScore {
            intercept: fit.intercept,
            coefficients: fit.slopes,
        },
        meta: SolverMeta {
            iterations: fit.iterations,
            converged: fit.converged,
            separation: fit.separation,
            gradient_max_norm: Some(fit.gradient_max_norm),
            cv_path: None,
        },
        objective_trace: fit.objective_trace,
    })
}

/// Least-squares regression of the outcome on covariates over the control arm.
pub fn fit_prognostic(ds: &Dataset) -> Result<ScoreFit> {
    if ds.n_control() <= ds.d() {
        return Err(CateError::RankDeficient {
            context: format!(
                "prognostic fit has {} control units for {} covariates",
                ds.n_control(),
                ds.d()
            ),
        });
    }
    let (x, y) = control_rows(ds);
    let fit = ols::fit_ols(&x, &y)?;
    Ok(ScoreFit {
        score: LinearScore {
            intercept: fit.intercept,
            coefficients: fit.slopes,
        },
        meta: SolverMeta {
            iterations: 1,
            converged: true,
            separation: false,
            gradient_max_norm: None,
            cv_path: None,
        },
        objective_trace: Vec::new(),
    })
}

/// Logistic regression of a binary outcome on covariates over the control arm.
pub fn fit_prognostic_logistic(ds: &Dataset) -> Result<ScoreFit> {
    let (x, y) = control_rows(ds);
    let fit = logistic::fit_logistic(&x, &y)?;
    Ok(ScoreFit {
        score: LinearScore {
            intercept: fit.intercept,
            coefficients: fit.slopes,
        },
        meta: SolverMeta {
            iterations: fit.iterations,
            converged: fit.converged,
            separation: fit.separation,
            gradient_max_norm: Some(fit.gradient_max_norm),
            cv_path: None,
        },
        objective_trace: fit.objective_trace,
    })
}

fn lasso_fit(
    family: Family,
    x: &DMatrix<f64>,
    y: &[f64],
    grid: Option<&[f64]>,
    folds: usize,
    seed: u64,
    label: &str,
    opts: &LassoOptions,
) -> Result<LassoScoreFit> {
    let default_grid;
    let grid = match grid {
        Some(g) => g,
        None => {
            let ratio = if x.nrows() < x.ncols() {
                opts.lambda_min_ratio.max(WIDE_LAMBDA_MIN_RATIO)
            } else {
                opts.lambda_min_ratio
            };
            default_grid = lasso::lambda_grid(lasso::lambda_max(x, y), opts.n_lambda, ratio);
            &default_grid
        }
    };
    let fit = lasso::cv_lasso(family, x, y, grid, folds, seed, label, opts)?;
    let converged = fit.path.points.iter().all(|p| p.converged);
    let iterations = fit.path.points.iter().map(|p| p.objective_trace.len().saturating_sub(1)).sum();
    Ok(LassoScoreFit {
        score: LinearScore {
            intercept: fit.intercept,
            coefficients: fit.slopes,
        },
        lambda: fit.lambda,
        meta: SolverMeta {
            iterations,
            converged,
            separation: false,
            gradient_max_norm: None,
            cv_path: Some(fit.cv),
        },
        path: fit.path,
    })
}

/// Smallest lambda ratio of the default grid when columns outnumber rows;
/// below it the fits interpolate the data and converge very slowly.
const WIDE_LAMBDA_MIN_RATIO: f64 = 0.01;

/// Lasso-penalized propensity model; lambda chosen by stratified K-fold CV
/// on held-out binomial deviance.
pub fn fit_propensity_lasso(
    ds: &Dataset,
    lambda_grid: Option<&[f64]>,
    folds: usize,
    seed: u64,
    opts: &LassoOptions,
) -> Result<LassoScoreFit> {
    let z = treatment_as_f64(ds);
    lasso_fit(Family::Binomial, ds.x(), &z, lambda_grid, folds, seed, "lasso-cv-propensity", opts)
}

/// Lasso-penalized prognostic model on the control arm; lambda chosen by
/// K-fold CV on held-out squared error.
pub fn fit_prognostic_lasso(
    ds: &Dataset,
    lambda_grid: Option<&[f64]>,
    folds: usize,
    seed: u64,
    opts: &LassoOptions,
) -> Result<LassoScoreFit> {
    let (x, y) = control_rows(ds);
    lasso_fit(Family::Gaussian, &x, &y, lambda_grid, folds, seed, "lasso-cv-prognostic", opts)
}

/// Fit both score models according to `opts`.
pub fn fit_score_model(ds: &Dataset, opts: &ScoreOptions) -> Result<ScoreModel> {
    let mode = opts.penalty.resolve(ds);
    let (propensity, prognostic, penalty, meta) = match mode {
        PenaltyMode::Lasso => {
            if opts.prognostic_link == PrognosticLink::Logistic {
                return Err(CateError::param(
                    "prognostic_link",
                    "logistic prognostic scores are only available without a penalty",
                ));
            }
            let e = fit_propensity_lasso(ds, opts.propensity_grid.as_deref(), opts.lasso_folds, opts.seed, &opts.lasso)?;
            let p = fit_prognostic_lasso(ds, opts.prognostic_grid.as_deref(), opts.lasso_folds, opts.seed, &opts.lasso)?;
            let penalty = Penalty::Lasso {
                lambda1: e.lambda,
                lambda2: p.lambda,
            };
            (e.score, p.score, penalty, FitMeta { propensity: e.meta, prognostic: p.meta })
        }
        _ => {
            let e = fit_propensity(ds)?;
            let p = match opts.prognostic_link {
                PrognosticLink::Linear => fit_prognostic(ds)?,
                PrognosticLink::Logistic => fit_prognostic_logistic(ds)?,
            };
            (e.score, p.score, Penalty::None, FitMeta { propensity: e.meta, prognostic: p.meta })
        }
    };
    Ok(ScoreModel {
        schema_version: SCHEMA_VERSION,
        covariates: ds.covariate_names().to_vec(),
        propensity,
        prognostic,
        prognostic_link: opts.prognostic_link,
        penalty,
        fit_meta: meta,
    })
}

/// Score new units: `e = sigmoid(x a + a0)` (clamped), `p = x t + t0`.
pub fn score(model: &ScoreModel, x_new: &DMatrix<f64>) -> Result<ScoredSample> {
    let d = model.propensity.coefficients.len();
    if x_new.ncols() != d {
        return Err(CateError::DimensionMismatch {
            expected: d,
            actual: x_new.ncols(),
        });
    }
    let m = x_new.nrows();
    let mut e_hat = Vec::with_capacity(m);
    let mut p_hat = Vec::with_capacity(m);
    for i in 0..m {
        e_hat.push(clamp_propensity(sigmoid(model.propensity.linear_predictor(x_new, i))));
        let lp = model.prognostic.linear_predictor(x_new, i);
        p_hat.push(match model.prognostic_link {
            PrognosticLink::Linear => lp,
            PrognosticLink::Logistic => sigmoid(lp),
        });
    }
    ScoredSample::new(e_hat, p_hat)
}

impl ScoreModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ScoreModel = serde_json::from_str(s)?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(CateError::Schema(format!(
                "unsupported score model schema_version {}",
                m.schema_version
            )));
        }
        Ok(m)
    }
}
