//! Synthetic designs with known effects.
//!
//! Scenario ids 1 to 7:
//!
//! 1. `X ~ U[0,1]^d`, `logit e = X'b_e`, `p = X'b_p`, coefficients drawn from
//!    `U[-1,1]`; `tau = 1{e < 0.6, p < 0}`; `Y = p + Z tau + N(0,1)`.
//! 2. As 1 plus ten pairwise interactions in each of `logit e` and `p`
//!    (needs `d >= 10`).
//! 3. As 1 plus squared terms (`x2^2 + x4^2 - x7^2`, `x2^2 + x4^2 - x10^2`).
//! 4. As 1 with `tau = 1{e > 0.6} + 1{p > 0}`.
//! 5. `X ~ N(0, I)`, `Y = 1 + sum(X) + N(0, 100 - d)`, exactly `ceil(n/2)`
//!    treated at random, `tau = 0`.
//! 6. `X ~ U[0,1]^d`, `e = (1 + f(x1)) / 4` with `f` the Beta(2,4) density,
//!    `Y = 2 x1 - 1 + N(0,1)`, `tau = 0`.
//! 7. As 1 with six fixed coefficients on the first six covariates; meant
//!    for `d > n`.
//!
//! Treatment is drawn as `Z ~ Bernoulli(e(X))` except in scenario 5.

mod bench;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CateError, Result};
use crate::scores::sigmoid;
use crate::seed::labeled_rng;
pub use bench::{
    run_benchmark, sweep_k, BenchConfig, BenchmarkReport, BootstrapSettings, Method, MethodResult, MethodSummary, SweepPoint, TrialRecord,
};

pub const SCHEMA_VERSION: u32 = 1;

const S2_LOGIT: [(usize, usize, f64); 10] = [
    (1, 3, 0.5),
    (2, 4, 0.7),
    (3, 5, 0.5),
    (4, 6, 0.7),
    (5, 7, 0.5),
    (1, 6, 0.5),
    (2, 3, 0.7),
    (3, 4, 0.5),
    (4, 5, 0.5),
    (5, 6, 0.5),
];
const S2_PROG: [(usize, usize, f64); 10] = [
    (1, 3, 0.5),
    (2, 4, 0.7),
    (3, 8, 0.5),
    (4, 9, 0.7),
    (8, 10, 0.5),
    (1, 9, 0.5),
    (2, 3, 0.7),
    (3, 4, 0.5),
    (4, 8, 0.5),
    (8, 9, 0.5),
];
const S7_LOGIT: [f64; 6] = [0.4, 0.9, -0.4, -0.7, -0.3, 0.6];
const S7_PROG: [f64; 6] = [0.9, -0.9, 0.2, -0.2, 0.9, -0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: u8,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    /// Seed for the random coefficient vectors; `None` uses `seed`, so each
    /// design draws fresh coefficients.
    pub coefficient_seed: Option<u64>,
    /// Propensity cut of the effect regions (scenarios 1-4, 7).
    pub e_threshold: f64,
    /// Prognostic cut of the effect regions (scenarios 1-4, 7).
    pub p_threshold: f64,
}

impl ScenarioSpec {
    pub fn new(id: u8, n: usize, d: usize, seed: u64) -> Self {
        ScenarioSpec {
            id,
            n,
            d,
            seed,
            coefficient_seed: None,
            e_threshold: 0.6,
            p_threshold: 0.0,
        }
    }

    /// Reference `(n, d)` for each scenario. Scenario 7 defaults to a
    /// reduced `(600, 1000)`; `full_scale` selects `(3000, 5000)`.
    pub fn default_size(id: u8, full_scale: bool) -> Option<(usize, usize)> {
        Some(match id {
            1 => (1000, 2),
            2..=4 => (3000, 10),
            5 => (4000, 10),
            6 => (1000, 2),
            7 if full_scale => (3000, 5000),
            7 => (600, 1000),
            _ => return None,
        })
    }

    /// Noise variance of scenario 5.
    pub fn scenario5_noise_variance(&self) -> f64 {
        100.0 - self.d as f64
    }

    pub fn check(&self) -> Result<()> {
        if !(1..=7).contains(&self.id) {
            return Err(CateError::param("scenario", format!("unsupported scenario id {}", self.id)));
        }
        if self.n < 2 {
            return Err(CateError::param("n", "need at least 2 units"));
        }
        if self.d == 0 {
            return Err(CateError::param("d", "need at least 1 covariate"));
        }
        let min_d = match self.id {
            2 | 3 => 10,
            7 => 6,
            _ => 1,
        };
        if self.d < min_d {
            return Err(CateError::param("d", format!("scenario {} needs d >= {min_d}", self.id)));
        }
        if self.id == 5 && self.d >= 100 {
            return Err(CateError::param("d", "scenario 5 needs d < 100 for a positive noise variance"));
        }
        if !self.e_threshold.is_finite() || !self.p_threshold.is_finite() {
            return Err(CateError::param("threshold", "must be finite"));
        }
        Ok(())
    }

    fn tau(&self, e: f64, p: f64) -> f64 {
        match self.id {
            1..=3 | 7 => (e < self.e_threshold && p < self.p_threshold) as u8 as f64,
            4 => (e > self.e_threshold) as u8 as f64 + (p > self.p_threshold) as u8 as f64,
            _ => 0.0,
        }
    }
}

/// A generated design together with its population quantities.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub dataset: Dataset,
    pub e_true: Vec<f64>,
    pub p_true: Vec<f64>,
    pub beta_e: Vec<f64>,
    pub beta_p: Vec<f64>,
}

impl Simulated {
    /// Share of units with a nonzero true effect.
    pub fn active_fraction(&self) -> f64 {
        let tau = self.dataset.tau_true().unwrap_or(&[]);
        tau.iter().filter(|&&t| t != 0.0).count() as f64 / tau.len().max(1) as f64
    }
}

/// Beta(2, 4) density.
pub fn beta24_pdf(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        20.0 * x * (1.0 - x).powi(3)
    } else {
        0.0
    }
}

/// Draw one design.
pub fn generate(spec: &ScenarioSpec) -> Result<Dataset> {
    Ok(simulate(spec)?.dataset)
}

/// Draw one design and keep its true scores and coefficients.
pub fn simulate(spec: &ScenarioSpec) -> Result<Simulated> {
    spec.check()?;
    let (n, d) = (spec.n, spec.d);
    let mut coef_rng = labeled_rng(spec.coefficient_seed.unwrap_or(spec.seed), "coefficients");
    let mut rng = labeled_rng(spec.seed, "data");

    let (beta_e, beta_p): (Vec<f64>, Vec<f64>) = match spec.id {
        1..=4 => {
            let be = (0..d).map(|_| coef_rng.random_range(-1.0..=1.0)).collect();
            let bp = (0..d).map(|_| coef_rng.random_range(-1.0..=1.0)).collect();
            (be, bp)
        }
        5 => (vec![0.0; d], vec![1.0; d]),
        7 => {
            let mut be = vec![0.0; d];
            let mut bp = vec![0.0; d];
            be[..6].copy_from_slice(&S7_LOGIT);
            bp[..6].copy_from_slice(&S7_PROG);
            (be, bp)
        }
        _ => (vec![0.0; d], vec![0.0; d]),
    };

    let mut x = DMatrix::<f64>::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            x[(i, j)] = if spec.id == 5 {
                rng.sample(StandardNormal)
            } else {
                rng.random::<f64>()
            };
        }
    }
    // 1-based covariate accessor, matching the scenario formulas
    let xv = |i: usize, j: usize| x[(i, j - 1)];
    let dot = |i: usize, b: &[f64]| (0..d).map(|j| x[(i, j)] * b[j]).sum::<f64>();

    let mut e_true = Vec::with_capacity(n);
    let mut p_true = Vec::with_capacity(n);
    for i in 0..n {
        let (e, p) = match spec.id {
            1 | 4 | 7 => (sigmoid(dot(i, &beta_e)), dot(i, &beta_p)),
            2 => {
                let le = dot(i, &beta_e) + S2_LOGIT.iter().map(|&(a, b, c)| c * xv(i, a) * xv(i, b)).sum::<f64>();
                let p = dot(i, &beta_p) + S2_PROG.iter().map(|&(a, b, c)| c * xv(i, a) * xv(i, b)).sum::<f64>();
                (sigmoid(le), p)
            }
            3 => {
                let le = dot(i, &beta_e) + xv(i, 2).powi(2) + xv(i, 4).powi(2) - xv(i, 7).powi(2);
                let p = dot(i, &beta_p) + xv(i, 2).powi(2) + xv(i, 4).powi(2) - xv(i, 10).powi(2);
                (sigmoid(le), p)
            }
            5 => (n.div_ceil(2) as f64 / n as f64, 1.0 + dot(i, &beta_p)),
            6 => ((1.0 + beta24_pdf(xv(i, 1))) / 4.0, 2.0 * xv(i, 1) - 1.0),
            _ => unreachable!("checked above"),
        };
        e_true.push(e);
        p_true.push(p);
    }

    let z: Vec<u8> = if spec.id == 5 {
        let mut z = vec![0u8; n];
        for i in sample(&mut rng, n, n.div_ceil(2)) {
            z[i] = 1;
        }
        z
    } else {
        e_true.iter().map(|&e| (rng.random::<f64>() < e) as u8).collect()
    };

    let noise_sd = if spec.id == 5 { spec.scenario5_noise_variance().sqrt() } else { 1.0 };
    let noise = Normal::new(0.0, noise_sd).map_err(|e| CateError::Numerical(e.to_string()))?;
    let tau: Vec<f64> = (0..n).map(|i| spec.tau(e_true[i], p_true[i])).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| p_true[i] + z[i] as f64 * tau[i] + noise.sample(&mut rng))
        .collect();

    let dataset = Dataset::new(x, z, y, Some(tau))?;
    Ok(Simulated {
        dataset,
        e_true,
        p_true,
        beta_e,
        beta_p,
    })
}
