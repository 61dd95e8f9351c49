//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string. The
//! `*_json` functions hold the logic and are callable from native code.

use cate_core::inference::{bootstrap_ci, coverage, mse};
use cate_core::pipeline::{fit, KChoice, PipelineConfig};
use cate_core::simulation::{simulate, sweep_k, ScenarioSpec};
use cate_core::tree::{export_grid, EffectGrid};
use cate_core::{CateError, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Points sent to the page for the scatter layer.
const MAX_POINTS: usize = 1500;

#[derive(Serialize)]
struct MapView {
    n: usize,
    d: usize,
    k: usize,
    n_leaves: usize,
    mse: f64,
    grid: EffectGrid,
    /// `[e_hat, p_hat, tau_true, tau_hat]` per unit.
    points: Vec<[f64; 4]>,
    tree: String,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct SweepView {
    k: Vec<usize>,
    mean_mse: Vec<f64>,
}

#[derive(Serialize)]
struct IntervalView {
    b: usize,
    level: f64,
    mean_width: f64,
    coverage: f64,
    /// `[tau_hat, lo, hi, tau_true]`, sorted by `tau_hat`.
    units: Vec<[f64; 4]>,
}

fn spec(scenario: u8, n: usize, seed: u64) -> Result<ScenarioSpec> {
    if scenario == 7 {
        return Err(CateError::InvalidParameter { name: "scenario", reason: "scenario 7 is too large for the browser".into() });
    }
    let (_, d) = ScenarioSpec::default_size(scenario, false)
        .ok_or_else(|| CateError::InvalidParameter { name: "scenario", reason: format!("unsupported scenario id {scenario}") })?;
    let s = ScenarioSpec::new(scenario, n, d, seed);
    s.check()?;
    Ok(s)
}

fn k_choice(k: usize) -> KChoice {
    if k == 0 {
        KChoice::Auto
    } else {
        KChoice::Fixed(k)
    }
}

fn range(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Simulate a scenario, fit the estimator and return the effect map.
/// `k = 0` selects the number of matches automatically.
pub fn fit_map_json(scenario: u8, n: usize, seed: u64, k: usize, min_node: usize, resolution: usize) -> Result<String> {
    let sim = simulate(&spec(scenario, n, seed)?)?;
    let ds = &sim.dataset;
    let config = PipelineConfig {
        k: k_choice(k),
        min_node_size: min_node,
        seed,
        ..PipelineConfig::default()
    };
    let f = fit(ds, &config)?;
    let tau_hat = f.pipeline.tree.predict(&f.scored);
    let tau = ds.tau_true().expect("simulated data carries true effects");
    let grid = export_grid(
        &f.pipeline.tree,
        range(&f.scored.e_hat),
        range(&f.scored.p_hat),
        (resolution, resolution),
    )?;
    let step = n.div_ceil(MAX_POINTS).max(1);
    let points = (0..n)
        .step_by(step)
        .map(|i| [f.scored.e_hat[i], f.scored.p_hat[i], tau[i], tau_hat[i]])
        .collect();
    let view = MapView {
        n,
        d: ds.d(),
        k: f.pipeline.k,
        n_leaves: f.pipeline.tree.n_leaves(),
        mse: mse(&tau_hat, tau)?,
        grid,
        points,
        tree: f.pipeline.tree.to_text(),
        warnings: f.warnings,
    };
    Ok(serde_json::to_string(&view)?)
}

/// Mean error over `trials` designs for `k = 1..=kmax`.
pub fn sweep_json(scenario: u8, n: usize, seed: u64, kmax: usize, trials: usize) -> Result<String> {
    if kmax == 0 {
        return Err(CateError::InvalidParameter { name: "kmax", reason: "must be at least 1".into() });
    }
    let ks: Vec<usize> = (1..=kmax).collect();
    let pts = sweep_k(&spec(scenario, n, seed)?, &ks, trials, &PipelineConfig::default(), 1)?;
    let view = SweepView {
        k: pts.iter().map(|p| p.k).collect(),
        mean_mse: pts.iter().map(|p| p.mean_mse).collect(),
    };
    Ok(serde_json::to_string(&view)?)
}

/// Percentile bootstrap intervals for every unit of one simulated design.
pub fn bootstrap_json(scenario: u8, n: usize, seed: u64, b: usize, level: f64) -> Result<String> {
    let ds = simulate(&spec(scenario, n, seed)?)?.dataset;
    let config = PipelineConfig {
        seed,
        ..PipelineConfig::default()
    };
    let point = fit(&ds, &config)?;
    let tau_hat = point.pipeline.tree.predict(&point.scored);
    let r = bootstrap_ci(&ds, &config, b, level, seed, 1)?;
    let tau = ds.tau_true().expect("simulated data carries true effects");
    let mut units: Vec<[f64; 4]> = (0..ds.n()).map(|i| [tau_hat[i], r.lo[i], r.hi[i], tau[i]]).collect();
    units.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let view = IntervalView {
        b,
        level,
        mean_width: r.mean_width(),
        coverage: coverage(&r, tau)?,
        units,
    };
    Ok(serde_json::to_string(&view)?)
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn fit_map(scenario: u8, n: usize, seed: u64, k: usize, min_node: usize, resolution: usize) -> std::result::Result<String, JsError> {
    js(fit_map_json(scenario, n, seed, k, min_node, resolution))
}

#[wasm_bindgen]
pub fn sweep(scenario: u8, n: usize, seed: u64, kmax: usize, trials: usize) -> std::result::Result<String, JsError> {
    js(sweep_json(scenario, n, seed, kmax, trials))
}

#[wasm_bindgen]
pub fn bootstrap(scenario: u8, n: usize, seed: u64, b: usize, level: f64) -> std::result::Result<String, JsError> {
    js(bootstrap_json(scenario, n, seed, b, level))
}
