//! End-to-end estimator: score models, cross-arm matching, proxy effects and
//! a pruned tree on the score plane.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{check_overlap, validate, Dataset, OverlapReport, ScoredSample};
use crate::error::{CateError, Result};
use crate::matching::{default_k, match_knn_with, proxy_ite, MatchMetric, MatchOptions, MatchResult, ProxyEffects};
use crate::scores::{fit_score_model, score, PenaltyMode, PrognosticLink, ScoreModel, ScoreOptions};
use crate::tree::{grow_tree, prune_tree, Axis, CateTree, CpRule, GrowParams, PruneParams};

pub const SCHEMA_VERSION: u32 = 1;

/// Number of matched neighbors: a fixed count or `round(ln n)` at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "KRepr", into = "KRepr")]
pub enum KChoice {
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KRepr {
    N(usize),
    S(String),
}

impl From<KChoice> for KRepr {
    fn from(k: KChoice) -> Self {
        match k {
            KChoice::Auto => KRepr::S("auto".into()),
            KChoice::Fixed(k) => KRepr::N(k),
        }
    }
}

impl TryFrom<KRepr> for KChoice {
    type Error = String;

    fn try_from(r: KRepr) -> std::result::Result<Self, String> {
        match r {
            KRepr::N(k) => Ok(KChoice::Fixed(k)),
            KRepr::S(s) => s.parse(),
        }
    }
}

impl std::str::FromStr for KChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(KChoice::Auto);
        }
        s.parse::<usize>()
            .map(KChoice::Fixed)
            .map_err(|_| format!("expected a positive integer or `auto`, got `{s}`"))
    }
}

impl fmt::Display for KChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KChoice::Auto => f.write_str("auto"),
            KChoice::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl KChoice {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            KChoice::Auto => default_k(n),
            KChoice::Fixed(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub penalty: PenaltyMode,
    pub k: KChoice,
    pub min_node_size: usize,
    /// Smallest split gain, relative to the root sum of squares, while growing.
    pub cp_floor: f64,
    pub cp_rule: CpRule,
    pub folds: usize,
    pub lasso_folds: usize,
    pub bootstrap_b: usize,
    pub level: f64,
    pub seed: u64,
    pub standardize_prognostic: bool,
    pub overlap_eps: f64,
    /// `Both` is the two-score estimator; the others are single-score
    /// baselines that match and split on one coordinate only.
    pub metric: MatchMetric,
    pub prognostic_link: PrognosticLink,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            penalty: PenaltyMode::Auto,
            k: KChoice::Auto,
            min_node_size: 20,
            cp_floor: 0.01,
            cp_rule: CpRule::MinCv,
            folds: 10,
            lasso_folds: 10,
            bootstrap_b: 1000,
            level: 0.95,
            seed: 0,
            standardize_prognostic: false,
            overlap_eps: 0.01,
            metric: MatchMetric::Both,
            prognostic_link: PrognosticLink::Linear,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if let KChoice::Fixed(0) = self.k {
            return Err(CateError::param("k", "must be at least 1"));
        }
        if self.min_node_size == 0 {
            return Err(CateError::param("min_node_size", "must be at least 1"));
        }
        if !(self.cp_floor >= 0.0 && self.cp_floor < 1.0) {
            return Err(CateError::param("cp_floor", "must lie in [0, 1)"));
        }
        if self.folds < 2 {
            return Err(CateError::param("folds", "need at least 2"));
        }
        if self.lasso_folds < 2 {
            return Err(CateError::param("lasso_folds", "need at least 2"));
        }
        if self.bootstrap_b < 2 {
            return Err(CateError::param("b", "need at least 2 resamples"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CateError::param("level", "must lie in (0, 1)"));
        }
        if !(self.overlap_eps > 0.0 && self.overlap_eps < 0.5) {
            return Err(CateError::param("eps", "must lie in (0, 0.5)"));
        }
        Ok(())
    }

    pub fn grow_params(&self) -> GrowParams {
        let params = GrowParams {
            min_node_size: self.min_node_size,
            cp_floor: self.cp_floor,
            axes: [true, true],
        };
        match self.metric {
            MatchMetric::Both => params,
            MatchMetric::PropensityOnly => params.single_axis(Axis::Propensity),
            MatchMetric::PrognosticOnly => params.single_axis(Axis::Prognostic),
        }
    }

    pub fn score_options(&self) -> ScoreOptions {
        ScoreOptions {
            penalty: self.penalty,
            prognostic_link: self.prognostic_link,
            lasso_folds: self.lasso_folds,
            seed: self.seed,
            ..ScoreOptions::default()
        }
    }
}

/// Fitted score models and tree; everything needed to predict new units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub schema_version: u32,
    pub config: PipelineConfig,
    pub k: usize,
    pub scores: ScoreModel,
    pub tree: CateTree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: ScoredSample,
    pub leaf: Vec<usize>,
    pub tau_hat: Vec<f64>,
}

/// A fit plus the intermediate products of the training run.
#[derive(Debug, Clone)]
pub struct PipelineFit {
    pub pipeline: FittedPipeline,
    pub scored: ScoredSample,
    pub matches: MatchResult,
    pub proxy: ProxyEffects,
    pub grown: CateTree,
    pub overlap: OverlapReport,
    pub warnings: Vec<String>,
}

/// Products of steps 2 and 3 on already-scored units.
#[derive(Debug, Clone)]
pub struct TreeFit {
    pub matches: MatchResult,
    pub proxy: ProxyEffects,
    pub grown: CateTree,
    pub tree: CateTree,
}

/// Match on `scored`, build proxy effects and fit the pruned tree.
pub fn fit_tree_on_scores(ds: &Dataset, scored: &ScoredSample, k: usize, config: &PipelineConfig) -> Result<TreeFit> {
    let opts = MatchOptions {
        metric: config.metric,
        standardize_prognostic: config.standardize_prognostic,
    };
    let matches = match_knn_with(ds, scored, k, &opts)?;
    let proxy = proxy_ite(ds, &matches)?;
    let grown = grow_tree(scored, &proxy, config.grow_params())?;
    let prune = PruneParams {
        folds: config.folds.min(ds.n()),
        seed: config.seed,
        rule: config.cp_rule,
    };
    let tree = prune_tree(&grown, scored, &proxy, prune)?;
    Ok(TreeFit {
        matches,
        proxy,
        grown,
        tree,
    })
}

/// Run the full estimator on `ds`.
pub fn fit(ds: &Dataset, config: &PipelineConfig) -> Result<PipelineFit> {
    config.validate()?;
    let report = validate(ds);
    if !report.is_ok() {
        return Err(CateError::InvalidData(report.violations.join("; ")));
    }
    let model = fit_score_model(ds, &config.score_options())?;
    let scored = score(&model, ds.x())?;
    if scored.e_hat.iter().chain(&scored.p_hat).any(|v| !v.is_finite()) {
        return Err(CateError::Numerical("non-finite fitted scores".into()));
    }
    let mut warnings = Vec::new();
    for (name, meta) in [("propensity", &model.fit_meta.propensity), ("prognostic", &model.fit_meta.prognostic)] {
        if !meta.converged {
            warnings.push(format!("{name} solver stopped before meeting its tolerance"));
        }
        if meta.separation {
            warnings.push(format!("{name} model hit quasi-separation; a small ridge was added"));
        }
    }
    let overlap = check_overlap(&scored, config.overlap_eps)?;
    if overlap.violated() {
        warnings.push(format!(
            "{} units have estimated propensity outside [{}, {}]",
            overlap.count(),
            config.overlap_eps,
            1.0 - config.overlap_eps
        ));
    }
    let k = config.k.resolve(ds.n());
    let t = fit_tree_on_scores(ds, &scored, k, config)?;
    if t.matches.clamped {
        warnings.push(format!("k = {k} exceeds an arm size and was clamped"));
    }
    Ok(PipelineFit {
        pipeline: FittedPipeline {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            k,
            scores: model,
            tree: t.tree,
        },
        scored,
        matches: t.matches,
        proxy: t.proxy,
        grown: t.grown,
        overlap,
        warnings,
    })
}

impl FittedPipeline {
    /// Score new covariate rows and route them through the tree.
    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<Prediction> {
        let scores = score(&self.scores, x_new)?;
        let leaf: Vec<usize> = (0..scores.len()).map(|i| self.tree.leaf_of(scores.point(i))).collect();
        let tau_hat = leaf.iter().map(|&id| self.tree.node(id).effect).collect();
        Ok(Prediction { scores, leaf, tau_hat })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: FittedPipeline = serde_json::from_str(s)?;
        if p.schema_version != SCHEMA_VERSION {
            return Err(CateError::Schema(format!("unsupported pipeline schema_version {}", p.schema_version)));
        }
        Ok(p)
    }
}

/// Single-score matching baseline: match and split on one coordinate of
/// `scores` only, then predict in-sample.
pub fn baseline_single_score(ds: &Dataset, scores: &ScoredSample, which: Axis, k: usize, config: &PipelineConfig) -> Result<Vec<f64>> {
    let config = PipelineConfig {
        metric: match which {
            Axis::Propensity => MatchMetric::PropensityOnly,
            Axis::Prognostic => MatchMetric::PrognosticOnly,
        },
        ..config.clone()
    };
    let t = fit_tree_on_scores(ds, scores, k, &config)?;
    Ok(t.tree.predict(scores))
}
