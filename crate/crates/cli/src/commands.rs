use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use cate_core::data::{read_covariates, read_csv, write_csv, CsvSchema};
use cate_core::inference::{bootstrap_ci, coverage};
use cate_core::matching::write_match_csv;
use cate_core::parallel::available_threads;
use cate_core::pipeline::{self, PipelineConfig};
use cate_core::scores::ScoreModel;
use cate_core::simulation::{self, run_benchmark, sweep_k, BenchConfig, BootstrapSettings, Method, ScenarioSpec};
use cate_core::tree::{export_grid, CateTree};
use cate_core::{CateError, Dataset, Result};
use serde::{Deserialize, Serialize};

use crate::{BenchArgs, BootstrapArgs, ColumnArgs, DesignArgs, FitArgs, PredictArgs, SimulateArgs, SweepArgs};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

pub const MANIFEST: &str = "manifest.json";
pub const SCORES: &str = "scores.json";
pub const TREE_JSON: &str = "tree.json";
pub const TREE_TEXT: &str = "tree.txt";
pub const GRID: &str = "grid.csv";
pub const MATCHES: &str = "matches.csv";
pub const SUMMARY: &str = "summary.json";

/// Everything needed to reproduce a `fit` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    tool_version: String,
    command: String,
    input: PathBuf,
    columns: CsvSchema,
    config: PipelineConfig,
    write_matches: bool,
    grid_resolution: usize,
}

#[derive(Serialize)]
struct FitSummary {
    schema_version: u32,
    n: usize,
    d: usize,
    n_treated: usize,
    k: usize,
    k_clamped: bool,
    n_leaves: usize,
    cp_selected: f64,
    overlap_violations: usize,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct BootstrapSummary {
    schema_version: u32,
    n: usize,
    b: usize,
    level: f64,
    seed: u64,
    mean_width: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    coverage: Option<f64>,
    config: PipelineConfig,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CateError::InvalidData(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn schema(cols: &ColumnArgs) -> CsvSchema {
    CsvSchema {
        y_col: cols.y_col.clone(),
        z_col: cols.z_col.clone(),
        x_cols: cols.x_cols.clone(),
        ..CsvSchema::default()
    }
}

fn load(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    read_csv(open(path)?, schema)
}

fn design_spec(d: &DesignArgs, seed: u64) -> Result<ScenarioSpec> {
    let (n0, d0) = ScenarioSpec::default_size(d.scenario, d.full_scale)
        .ok_or_else(|| CateError::InvalidParameter {
            name: "scenario",
            reason: format!("unsupported scenario id {}", d.scenario),
        })?;
    let mut spec = ScenarioSpec::new(d.scenario, d.n.unwrap_or(n0), d.d.unwrap_or(d0), seed);
    if d.fix_coefficients {
        spec.coefficient_seed = Some(seed);
    }
    spec.check()?;
    Ok(spec)
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let design = DesignArgs {
        scenario: a.scenario,
        n: a.n,
        d: a.d,
        full_scale: a.full_scale,
        fix_coefficients: false,
    };
    let spec = design_spec(&design, a.seed)?;
    let ds = simulation::generate(&spec)?;
    let mut w = create(&a.out)?;
    write_csv(&mut w, &ds)?;
    w.flush()?;
    println!(
        "scenario {}: n = {}, d = {}, treated = {} -> {}",
        spec.id,
        ds.n(),
        ds.d(),
        ds.n_treated(),
        a.out.display()
    );
    Ok(())
}

pub fn fit(a: FitArgs) -> Result<()> {
    let manifest = match &a.manifest {
        Some(path) => {
            let m: Manifest = serde_json::from_reader(open(path)?)?;
            if m.schema_version != MANIFEST_SCHEMA_VERSION {
                return Err(CateError::Schema(format!("unsupported manifest schema_version {}", m.schema_version)));
            }
            m
        }
        None => Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: "fit".into(),
            input: a.input.clone().expect("clap requires input without manifest"),
            columns: schema(&a.columns),
            config: a.pipeline.config(),
            write_matches: a.write_matches,
            grid_resolution: a.grid_resolution,
        },
    };
    manifest.config.validate()?;
    let ds = load(&manifest.input, &manifest.columns)?;
    let f = pipeline::fit(&ds, &manifest.config)?;
    for w in &f.warnings {
        eprintln!("warning: {w}");
    }

    let out = &a.out;
    fs::create_dir_all(out)?;
    write_text(&out.join(MANIFEST), &serde_json::to_string_pretty(&manifest)?)?;
    write_text(&out.join(SCORES), &f.pipeline.scores.to_json()?)?;
    write_text(&out.join(TREE_JSON), &f.pipeline.tree.to_json()?)?;
    write_text(&out.join(TREE_TEXT), &f.pipeline.tree.to_text())?;
    let range = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let grid = export_grid(
        &f.pipeline.tree,
        range(&f.scored.e_hat),
        range(&f.scored.p_hat),
        (manifest.grid_resolution, manifest.grid_resolution),
    )?;
    grid.write_csv(create(&out.join(GRID))?)?;
    if manifest.write_matches {
        write_match_csv(create(&out.join(MATCHES))?, &f.matches)?;
    }
    let summary = FitSummary {
        schema_version: MANIFEST_SCHEMA_VERSION,
        n: ds.n(),
        d: ds.d(),
        n_treated: ds.n_treated(),
        k: f.pipeline.k,
        k_clamped: f.matches.clamped,
        n_leaves: f.pipeline.tree.n_leaves(),
        cp_selected: f.pipeline.tree.cp_selected,
        overlap_violations: f.overlap.count(),
        warnings: f.warnings.clone(),
    };
    write_text(&out.join(SUMMARY), &serde_json::to_string_pretty(&summary)?)?;
    print!("{}", f.pipeline.tree.to_text());
    println!("bundle written to {}", out.display());
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let scores = ScoreModel::from_json(&fs::read_to_string(a.bundle.join(SCORES)).map_err(|e| {
        CateError::InvalidData(format!("cannot read {}: {e}", a.bundle.join(SCORES).display()))
    })?)?;
    let tree = CateTree::from_json(&fs::read_to_string(a.bundle.join(TREE_JSON)).map_err(|e| {
        CateError::InvalidData(format!("cannot read {}: {e}", a.bundle.join(TREE_JSON).display()))
    })?)?;
    let x = read_covariates(open(&a.input)?, &scores.covariates)?;
    let fitted = pipeline::FittedPipeline {
        schema_version: pipeline::SCHEMA_VERSION,
        config: PipelineConfig::default(),
        k: 0,
        scores,
        tree,
    };
    let pred = fitted.predict(&x)?;
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = BufWriter::new(sink);
    writeln!(w, "row,e_hat,p_hat,leaf,tau_hat")?;
    for i in 0..pred.tau_hat.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            i + 1,
            pred.scores.e_hat[i],
            pred.scores.p_hat[i],
            pred.leaf[i],
            pred.tau_hat[i]
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn bootstrap(a: BootstrapArgs) -> Result<()> {
    let config = PipelineConfig {
        bootstrap_b: a.b,
        level: a.level,
        ..a.pipeline.config()
    };
    config.validate()?;
    let ds = load(&a.input, &schema(&a.columns))?;
    let point = pipeline::fit(&ds, &config)?;
    for w in &point.warnings {
        eprintln!("warning: {w}");
    }
    let estimate = point.pipeline.tree.predict(&point.scored);
    let threads = a.threads.unwrap_or_else(available_threads);
    let r = bootstrap_ci(&ds, &config, a.b, a.level, config.seed, threads)?;
    fs::create_dir_all(&a.out)?;
    r.write_csv(create(&a.out.join("intervals.csv"))?, &estimate)?;
    let cov = ds.tau_true().map(|t| coverage(&r, t)).transpose()?;
    let summary = BootstrapSummary {
        schema_version: MANIFEST_SCHEMA_VERSION,
        n: ds.n(),
        b: r.b,
        level: r.level,
        seed: r.seed,
        mean_width: r.mean_width(),
        coverage: cov,
        config,
    };
    write_text(&a.out.join(SUMMARY), &serde_json::to_string_pretty(&summary)?)?;
    match cov {
        Some(c) => println!("B = {}, mean width {:.4}, coverage {:.4}", r.b, r.mean_width(), c),
        None => println!("B = {}, mean width {:.4}", r.b, r.mean_width()),
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let methods = a
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|reason| CateError::InvalidParameter { name: "methods", reason })?;
    let seed = a.pipeline.seed;
    let cfg = BenchConfig {
        spec: design_spec(&a.design, seed)?,
        methods,
        trials: a.trials,
        pipeline: a.pipeline.config(),
        bootstrap: a.b.map(|b| BootstrapSettings { b, level: a.level }),
        threads: a.threads.unwrap_or_else(available_threads),
    };
    let report = run_benchmark(&cfg)?;
    write_text(&a.out, &report.to_json()?)?;
    println!("method  completed  failed  mean_mse  median_mse  mean_coverage");
    for s in &report.summary {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:<6}  {:>9}  {:>6}  {:>8}  {:>10}  {:>13}",
            s.method.name(),
            s.completed,
            s.failures,
            fmt(s.mean_mse),
            fmt(s.median_mse),
            fmt(s.mean_coverage)
        );
    }
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let spec = design_spec(&a.design, a.seed)?;
    let ks = a.k_values.clone().unwrap_or_else(|| (1..=a.kmax).collect());
    let cfg = PipelineConfig {
        min_node_size: a.min_node,
        seed: a.seed,
        ..PipelineConfig::default()
    };
    let pts = sweep_k(&spec, &ks, a.trials, &cfg, a.threads.unwrap_or_else(available_threads))?;
    let mut w = create(&a.out)?;
    writeln!(w, "k,mean_mse")?;
    for p in &pts {
        writeln!(w, "{},{}", p.k, p.mean_mse)?;
        println!("K = {:>3}  mean MSE {:.5}", p.k, p.mean_mse);
    }
    w.flush()?;
    Ok(())
}
