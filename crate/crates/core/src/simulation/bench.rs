//! Monte Carlo benchmark loop and the K sweep.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{simulate, ScenarioSpec, SCHEMA_VERSION};
use crate::error::{CateError, Result};
use crate::inference::{bootstrap_ci, coverage, empirical_quantile, mse};
use crate::matching::MatchMetric;
use crate::parallel::map_indexed;
use crate::pipeline::{fit_tree_on_scores, PipelineConfig};
use crate::scores::{fit_score_model, score};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Two-score matching and tree.
    Pp,
    /// Propensity score only.
    Psm,
    /// Prognostic score only.
    Prog,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Pp, Method::Psm, Method::Prog];

    pub fn metric(self) -> MatchMetric {
        match self {
            Method::Pp => MatchMetric::Both,
            Method::Psm => MatchMetric::PropensityOnly,
            Method::Prog => MatchMetric::PrognosticOnly,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Pp => "pp",
            Method::Psm => "psm",
            Method::Prog => "prog",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method `{s}` (expected pp, psm or prog)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    pub b: usize,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Template design; its `seed` is the master seed of the benchmark.
    pub spec: ScenarioSpec,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub pipeline: PipelineConfig,
    pub bootstrap: Option<BootstrapSettings>,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub mse: Option<f64>,
    pub coverage: Option<f64>,
    pub n_leaves: Option<usize>,
    pub runtime_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    /// Share of units with a nonzero true effect in this design.
    pub active_fraction: f64,
    pub n_treated: usize,
    pub k: usize,
    pub score_runtime_s: f64,
    pub results: Vec<MethodResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub completed: usize,
    pub failures: usize,
    pub mean_mse: Option<f64>,
    pub median_mse: Option<f64>,
    pub q25_mse: Option<f64>,
    pub q75_mse: Option<f64>,
    pub mean_coverage: Option<f64>,
    pub mean_runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub config: BenchConfig,
    pub trials: Vec<TrialRecord>,
    pub summary: Vec<MethodSummary>,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: BenchmarkReport = serde_json::from_str(s)?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(CateError::Schema(format!("unsupported report schema_version {}", r.schema_version)));
        }
        Ok(r)
    }

    /// Per-trial MSEs of one method, `None` where the trial failed.
    pub fn mses(&self, method: Method) -> Vec<Option<f64>> {
        self.trials
            .iter()
            .map(|t| t.results.iter().find(|r| r.method == method).and_then(|r| r.mse))
            .collect()
    }

    pub fn summary_for(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }
}

#[cfg(not(target_arch = "wasm32"))]
mod clock {
    pub struct Clock(std::time::Instant);

    impl Clock {
        pub fn start() -> Self {
            Clock(std::time::Instant::now())
        }

        pub fn seconds(&self) -> f64 {
            self.0.elapsed().as_secs_f64()
        }
    }
}

// no monotonic clock on bare wasm
#[cfg(target_arch = "wasm32")]
mod clock {
    pub struct Clock;

    impl Clock {
        pub fn start() -> Self {
            Clock
        }

        pub fn seconds(&self) -> f64 {
            0.0
        }
    }
}

use clock::Clock;

fn trial_spec(template: &ScenarioSpec, t: usize) -> ScenarioSpec {
    ScenarioSpec {
        seed: derive_seed(template.seed, &format!("trial-{t}")),
        ..template.clone()
    }
}

fn run_trial(cfg: &BenchConfig, t: usize) -> TrialRecord {
    let spec = trial_spec(&cfg.spec, t);
    let pipeline = PipelineConfig {
        seed: spec.seed,
        ..cfg.pipeline.clone()
    };
    let mut record = TrialRecord {
        trial: t,
        seed: spec.seed,
        active_fraction: f64::NAN,
        n_treated: 0,
        k: 0,
        score_runtime_s: 0.0,
        results: Vec::new(),
    };
    let failed = |record: &mut TrialRecord, msg: String| {
        record.results = cfg
            .methods
            .iter()
            .map(|&method| MethodResult {
                method,
                mse: None,
                coverage: None,
                n_leaves: None,
                runtime_s: 0.0,
                error: Some(msg.clone()),
            })
            .collect();
    };

    let sim = match simulate(&spec) {
        Ok(s) => s,
        Err(e) => {
            failed(&mut record, e.to_string());
            return record;
        }
    };
    let ds = &sim.dataset;
    record.active_fraction = sim.active_fraction();
    record.n_treated = ds.n_treated();
    let tau = ds.tau_true().expect("simulated data carries true effects");

    let clock = Clock::start();
    let scored = fit_score_model(ds, &pipeline.score_options()).and_then(|m| score(&m, ds.x()));
    record.score_runtime_s = clock.seconds();
    let scored = match scored {
        Ok(s) => s,
        Err(e) => {
            failed(&mut record, e.to_string());
            return record;
        }
    };
    let k = pipeline.k.resolve(ds.n());
    record.k = k;

    for &method in &cfg.methods {
        let mcfg = PipelineConfig {
            metric: method.metric(),
            ..pipeline.clone()
        };
        let clock = Clock::start();
        let outcome = fit_tree_on_scores(ds, &scored, k, &mcfg).and_then(|t| {
            let tau_hat = t.tree.predict(&scored);
            let err = mse(&tau_hat, tau)?;
            let cov = match &cfg.bootstrap {
                Some(b) => {
                    let r = bootstrap_ci(ds, &mcfg, b.b, b.level, derive_seed(spec.seed, method.name()), 1)?;
                    Some(coverage(&r, tau)?)
                }
                None => None,
            };
            Ok((err, cov, t.tree.n_leaves()))
        });
        let runtime_s = clock.seconds();
        record.results.push(match outcome {
            Ok((err, cov, leaves)) => MethodResult {
                method,
                mse: Some(err),
                coverage: cov,
                n_leaves: Some(leaves),
                runtime_s,
                error: None,
            },
            Err(e) => MethodResult {
                method,
                mse: None,
                coverage: None,
                n_leaves: None,
                runtime_s,
                error: Some(e.to_string()),
            },
        });
    }
    record
}

fn summarize(method: Method, trials: &[TrialRecord]) -> MethodSummary {
    let results: Vec<&MethodResult> = trials
        .iter()
        .filter_map(|t| t.results.iter().find(|r| r.method == method))
        .collect();
    let mut mses: Vec<f64> = results.iter().filter_map(|r| r.mse).collect();
    mses.sort_by(f64::total_cmp);
    let covs: Vec<f64> = results.iter().filter_map(|r| r.coverage).collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let q = |p: f64| (!mses.is_empty()).then(|| empirical_quantile(&mses, p));
    MethodSummary {
        method,
        completed: mses.len(),
        failures: results.len() - mses.len(),
        mean_mse: mean(&mses),
        median_mse: q(0.5),
        q25_mse: q(0.25),
        q75_mse: q(0.75),
        mean_coverage: mean(&covs),
        mean_runtime_s: mean(&results.iter().map(|r| r.runtime_s).collect::<Vec<_>>()).unwrap_or(0.0),
    }
}

/// Run every method on `trials` fresh designs. Trial `t` draws its design
/// from the sub-seed `trial-{t}` of the template seed; failures are kept in
/// the report rather than aborting the run.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchmarkReport> {
    if cfg.trials == 0 {
        return Err(CateError::param("trials", "need at least 1"));
    }
    if cfg.methods.is_empty() {
        return Err(CateError::param("methods", "need at least one method"));
    }
    cfg.spec.check()?;
    cfg.pipeline.validate()?;
    if let Some(b) = &cfg.bootstrap {
        if b.b < 2 || !(b.level > 0.0 && b.level < 1.0) {
            return Err(CateError::param("bootstrap", "need b >= 2 and level in (0, 1)"));
        }
    }
    let trials = map_indexed(cfg.trials, cfg.threads, |t| run_trial(cfg, t));
    let summary = cfg.methods.iter().map(|&m| summarize(m, &trials)).collect();
    Ok(BenchmarkReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        trials,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub mean_mse: f64,
    pub mses: Vec<f64>,
}

/// Mean MSE of the two-score estimator for each forced `k`, over the same
/// `trials` designs for every `k`.
pub fn sweep_k(spec: &ScenarioSpec, k_values: &[usize], trials: usize, pipeline: &PipelineConfig, threads: usize) -> Result<Vec<SweepPoint>> {
    if k_values.is_empty() || k_values.contains(&0) {
        return Err(CateError::param("k_values", "need a non-empty list of positive values"));
    }
    if trials == 0 {
        return Err(CateError::param("trials", "need at least 1"));
    }
    spec.check()?;
    pipeline.validate()?;
    let per_trial = map_indexed(trials, threads, |t| -> Result<Vec<f64>> {
        let spec = trial_spec(spec, t);
        let cfg = PipelineConfig {
            seed: spec.seed,
            metric: MatchMetric::Both,
            ..pipeline.clone()
        };
        let sim = simulate(&spec)?;
        let ds = &sim.dataset;
        let tau = ds.tau_true().expect("simulated data carries true effects");
        let scored = score(&fit_score_model(ds, &cfg.score_options())?, ds.x())?;
        k_values
            .iter()
            .map(|&k| {
                let t = fit_tree_on_scores(ds, &scored, k, &cfg)?;
                mse(&t.tree.predict(&scored), tau)
            })
            .collect()
    });
    let per_trial: Vec<Vec<f64>> = per_trial.into_iter().collect::<Result<_>>()?;
    Ok(k_values
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let mses: Vec<f64> = per_trial.iter().map(|row| row[j]).collect();
            SweepPoint {
                k,
                mean_mse: mses.iter().sum::<f64>() / mses.len() as f64,
                mses,
            }
        })
        .collect())
}
