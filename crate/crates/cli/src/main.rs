//! `cate`: estimate treatment-effect maps from observational data.
//!
//! Exit status: 0 on success, 2 for invalid input or arguments, 3 when a
//! numerical procedure fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use cate_core::pipeline::{KChoice, PipelineConfig};
use cate_core::scores::PenaltyMode;
use cate_core::tree::CpRule;
use cate_core::CateError;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cate", version, about = "Treatment-effect maps from propensity/prognostic score matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset with known effects.
    Simulate(SimulateArgs),
    /// Fit the estimator and write a model bundle.
    Fit(FitArgs),
    /// Predict effects for new units from a bundle.
    Predict(PredictArgs),
    /// Percentile bootstrap intervals for every unit.
    BootstrapCi(BootstrapArgs),
    /// Monte Carlo comparison against single-score matching.
    Bench(BenchArgs),
    /// Mean error as a function of the number of matches.
    SweepK(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CpRuleArg {
    MinCv,
    OneSe,
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyArg {
    Auto,
    None,
    Lasso,
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// Matches per unit: a positive integer or `auto` (round(ln n)).
    #[arg(long, default_value = "auto")]
    k: KChoice,
    /// Minimum units per leaf.
    #[arg(long = "min-node", default_value_t = 20)]
    min_node: usize,
    /// Minimum relative gain for a split while growing.
    #[arg(long = "cp-floor", default_value_t = 0.01)]
    cp_floor: f64,
    #[arg(long = "cp-rule", value_enum, default_value = "min-cv")]
    cp_rule: CpRuleArg,
    /// `auto` uses lasso when covariates outnumber control units.
    #[arg(long, value_enum, default_value = "auto")]
    penalty: PenaltyArg,
    /// Cross-validation folds for pruning.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Overlap warning threshold for estimated propensities.
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    /// Rescale prognostic scores to unit variance before matching.
    #[arg(long)]
    standardize_prognostic: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            penalty: match self.penalty {
                PenaltyArg::Auto => PenaltyMode::Auto,
                PenaltyArg::None => PenaltyMode::None,
                PenaltyArg::Lasso => PenaltyMode::Lasso,
            },
            k: self.k,
            min_node_size: self.min_node,
            cp_floor: self.cp_floor,
            cp_rule: match self.cp_rule {
                CpRuleArg::MinCv => CpRule::MinCv,
                CpRuleArg::OneSe => CpRule::OneSe,
            },
            folds: self.folds,
            seed: self.seed,
            standardize_prognostic: self.standardize_prognostic,
            overlap_eps: self.eps,
            ..PipelineConfig::default()
        }
    }
}

#[derive(Args, Clone)]
struct ColumnArgs {
    #[arg(long = "y-col", default_value = "y")]
    y_col: String,
    #[arg(long = "z-col", default_value = "z")]
    z_col: String,
    /// Comma-separated covariate columns; default: every `x<k>` column.
    #[arg(long = "x-cols", value_delimiter = ',')]
    x_cols: Option<Vec<String>>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: u8,
    /// Defaults to the scenario's reference size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reference size of scenario 7 at full scale (n = 3000, d = 5000).
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV; required unless `--manifest` is given.
    #[arg(long, required_unless_present = "manifest")]
    input: Option<PathBuf>,
    /// Re-run exactly the configuration recorded in a bundle manifest.
    #[arg(long, conflicts_with = "input")]
    manifest: Option<PathBuf>,
    /// Bundle directory to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    columns: ColumnArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Also write the neighbor lists.
    #[arg(long)]
    write_matches: bool,
    /// Cells per axis of the exported effect grid.
    #[arg(long, default_value_t = 50)]
    grid_resolution: usize,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BootstrapArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output directory for `intervals.csv` and `summary.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    b: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    columns: ColumnArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Clone)]
struct DesignArgs {
    #[arg(long)]
    scenario: u8,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    full_scale: bool,
    /// Draw the random coefficients once and share them across trials.
    #[arg(long)]
    fix_coefficients: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Comma-separated subset of pp, psm, prog.
    #[arg(long, value_delimiter = ',', default_value = "pp,psm,prog")]
    methods: Vec<String>,
    /// Bootstrap resamples per trial for coverage; no bootstrap when omitted.
    #[arg(long)]
    b: Option<usize>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    threads: Option<usize>,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Comma-separated K values; overrides `--kmax`.
    #[arg(long = "k", value_delimiter = ',')]
    k_values: Option<Vec<usize>>,
    /// Sweep K = 1..=kmax.
    #[arg(long, default_value_t = 20)]
    kmax: usize,
    #[arg(long)]
    threads: Option<usize>,
    /// Output CSV with columns `k, mean_mse`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "min-node", default_value_t = 20)]
    min_node: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn exit_code(err: &CateError) -> u8 {
    match err {
        CateError::Numerical(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Predict(a) => commands::predict(a),
        Command::BootstrapCi(a) => commands::bootstrap(a),
        Command::Bench(a) => commands::bench(a),
        Command::SweepK(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
