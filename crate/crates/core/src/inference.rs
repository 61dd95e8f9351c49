//! Percentile bootstrap over the whole estimator, and accuracy measures
//! against known effects.

use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CateError, Result};
use crate::parallel::map_indexed;
use crate::pipeline::{fit, PipelineConfig};
use crate::seed::{derive_seed, labeled_rng};

/// Resamples with an empty arm are redrawn at most this many times.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub b: usize,
    pub level: f64,
    pub seed: u64,
    /// `per_unit_estimates[i][b]`: estimate for original unit `i` from the
    /// pipeline fitted on resample `b`.
    pub per_unit_estimates: Vec<Vec<f64>>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BootstrapResult {
    pub fn n(&self) -> usize {
        self.lo.len()
    }

    pub fn mean_width(&self) -> f64 {
        let n = self.n().max(1) as f64;
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).sum::<f64>() / n
    }

    /// CSV with columns `index, estimate, lo, hi`.
    pub fn write_csv<W: Write>(&self, writer: W, estimate: &[f64]) -> Result<()> {
        if estimate.len() != self.n() {
            return Err(CateError::InvalidData(format!(
                "{} point estimates for {} intervals",
                estimate.len(),
                self.n()
            )));
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "estimate", "lo", "hi"])?;
        for i in 0..self.n() {
            w.write_record(&[
                i.to_string(),
                estimate[i].to_string(),
                self.lo[i].to_string(),
                self.hi[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Type-1 empirical quantile of a sorted sample: the `ceil(q * len)`-th
/// order statistic (1-based, clamped to the sample).
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let len = sorted.len();
    let k = ((q * len as f64) - 1e-9).ceil().clamp(1.0, len as f64) as usize;
    sorted[k - 1]
}

/// Row indices of one resample with both arms present.
fn draw_resample(ds: &Dataset, seed: u64) -> Result<Vec<usize>> {
    let n = ds.n();
    let mut rng = labeled_rng(seed, "resample");
    for _ in 0..=MAX_REDRAWS {
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let treated = rows.iter().filter(|&&i| ds.is_treated(i)).count();
        if treated > 0 && treated < n {
            return Ok(rows);
        }
    }
    Err(CateError::Numerical(format!(
        "no resample with both arms after {MAX_REDRAWS} redraws"
    )))
}

/// Percentile intervals from an arbitrary estimator.
///
/// `estimator(resample, seed)` fits on the resample and returns one estimate
/// per unit of the original `ds`. Resample `b` uses the sub-seed labeled
/// `bootstrap-{b}`; results are assembled in resample order regardless of
/// `threads`.
pub fn bootstrap_with<F>(ds: &Dataset, b: usize, level: f64, seed: u64, threads: usize, estimator: F) -> Result<BootstrapResult>
where
    F: Fn(&Dataset, u64) -> Result<Vec<f64>> + Sync,
{
    if b < 2 {
        return Err(CateError::param("b", "need at least 2 resamples"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(CateError::param("level", "must lie in (0, 1)"));
    }
    let n = ds.n();
    let runs = map_indexed(b, threads, |r| -> Result<Vec<f64>> {
        let sub = derive_seed(seed, &format!("bootstrap-{r}"));
        let rows = draw_resample(ds, sub)?;
        let est = estimator(&ds.select_rows(&rows), sub)?;
        if est.len() != n {
            return Err(CateError::InvalidData(format!("estimator returned {} values for {n} units", est.len())));
        }
        Ok(est)
    });
    let runs: Vec<Vec<f64>> = runs.into_iter().collect::<Result<_>>()?;
    let per_unit: Vec<Vec<f64>> = (0..n).map(|i| runs.iter().map(|r| r[i]).collect()).collect();
    let alpha = (1.0 - level) / 2.0;
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for row in &per_unit {
        let mut sorted = row.clone();
        sorted.sort_by(f64::total_cmp);
        lo.push(empirical_quantile(&sorted, alpha));
        hi.push(empirical_quantile(&sorted, 1.0 - alpha));
    }
    Ok(BootstrapResult {
        b,
        level,
        seed,
        per_unit_estimates: per_unit,
        lo,
        hi,
    })
}

/// Bootstrap the full pipeline: each resample refits the score models,
/// matching (with `k` re-resolved for the resample) and the pruned tree,
/// then predicts every original unit.
pub fn bootstrap_ci(ds: &Dataset, config: &PipelineConfig, b: usize, level: f64, seed: u64, threads: usize) -> Result<BootstrapResult> {
    config.validate()?;
    bootstrap_with(ds, b, level, seed, threads, |resample, sub| {
        let cfg = PipelineConfig {
            seed: sub,
            ..config.clone()
        };
        let fitted = fit(resample, &cfg)?;
        Ok(fitted.pipeline.predict(ds.x())?.tau_hat)
    })
}

/// Fraction of units whose true effect lies in `[lo, hi]`.
pub fn coverage(result: &BootstrapResult, tau_true: &[f64]) -> Result<f64> {
    if tau_true.len() != result.n() {
        return Err(CateError::InvalidData(format!(
            "{} true effects for {} intervals",
            tau_true.len(),
            result.n()
        )));
    }
    if tau_true.is_empty() {
        return Err(CateError::InvalidData("no units".into()));
    }
    let inside = (0..result.n())
        .filter(|&i| result.lo[i] <= tau_true[i] && tau_true[i] <= result.hi[i])
        .count();
    Ok(inside as f64 / result.n() as f64)
}

/// Mean squared difference.
pub fn mse(tau_hat: &[f64], tau_true: &[f64]) -> Result<f64> {
    if tau_hat.len() != tau_true.len() {
        return Err(CateError::InvalidData(format!(
            "length mismatch: {} estimates, {} true effects",
            tau_hat.len(),
            tau_true.len()
        )));
    }
    if tau_hat.is_empty() {
        return Err(CateError::InvalidData("no units".into()));
    }
    let s: f64 = tau_hat.iter().zip(tau_true).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / tau_hat.len() as f64)
}
