//! Nearest-neighbor matching across treatment arms in score space, and the
//! proxy individual effects built from it.
//!
//! Matching is with replacement: each unit independently takes the `K`
//! closest units of the opposite arm, ties broken by lower unit index.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ScoredSample};
use crate::error::{CateError, Result};
use crate::kdtree::{planar_distance, KdTree};

/// Below this sample size an exhaustive scan replaces the kd-tree.
pub const BRUTE_FORCE_BELOW: usize = 64;

/// Euclidean distance between two `(propensity, prognostic)` pairs.
pub fn score_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    planar_distance([a.0, a.1], [b.0, b.1])
}

/// Nearest integer to `ln(n)`, at least 1.
pub fn default_k(n: usize) -> usize {
    ((n.max(1) as f64).ln().round() as usize).max(1)
}

/// Which score coordinates enter the matching distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMetric {
    #[default]
    Both,
    PropensityOnly,
    PrognosticOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchOptions {
    pub metric: MatchMetric,
    /// Rescale prognostic scores to unit variance before measuring distance.
    pub standardize_prognostic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub k: usize,
    /// Opposite-arm neighbors of each unit, nearest first.
    pub neighbor_sets: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
    /// Set when `k` exceeded an arm size and was clamped for some units.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyEffects {
    pub y_tilde: Vec<f64>,
}

fn match_points(scores: &ScoredSample, opts: &MatchOptions) -> Vec<[f64; 2]> {
    let n = scores.len();
    let p_scale = if opts.standardize_prognostic {
        let mean = scores.p_hat.iter().sum::<f64>() / n as f64;
        let sd = (scores.p_hat.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n as f64).sqrt();
        if sd > 0.0 {
            1.0 / sd
        } else {
            1.0
        }
    } else {
        1.0
    };
    (0..n)
        .map(|i| {
            let e = scores.e_hat[i];
            let p = scores.p_hat[i] * p_scale;
            match opts.metric {
                MatchMetric::Both => [e, p],
                MatchMetric::PropensityOnly => [e, 0.0],
                MatchMetric::PrognosticOnly => [0.0, p],
            }
        })
        .collect()
}

fn brute_force(points: &[[f64; 2]], pool: &[usize], q: [f64; 2], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(f64, usize)> = pool.iter().map(|&j| (planar_distance(q, points[j]), j)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all.into_iter().map(|(d, j)| (j, d)).collect()
}

/// K-nearest opposite-arm neighbors for every unit.
pub fn match_knn(ds: &Dataset, scores: &ScoredSample, k: usize) -> Result<MatchResult> {
    match_knn_with(ds, scores, k, &MatchOptions::default())
}

pub fn match_knn_with(ds: &Dataset, scores: &ScoredSample, k: usize, opts: &MatchOptions) -> Result<MatchResult> {
    if k == 0 {
        return Err(CateError::param("k", "must be at least 1"));
    }
    if scores.len() != ds.n() {
        return Err(CateError::InvalidData(format!(
            "{} score pairs for {} units",
            scores.len(),
            ds.n()
        )));
    }
    let points = match_points(scores, opts);
    let treated = ds.treated_indices();
    let control = ds.control_indices();
    if treated.is_empty() || control.is_empty() {
        return Err(CateError::InvalidData("matching needs both arms non-empty".into()));
    }
    let clamped = k > treated.len() || k > control.len();
    let use_tree = ds.n() >= BRUTE_FORCE_BELOW;
    let build = |pool: &[usize]| {
        let items: Vec<(usize, [f64; 2])> = pool.iter().map(|&j| (j, points[j])).collect();
        KdTree::new(&items)
    };
    let (tree_t, tree_c) = if use_tree {
        (Some(build(&treated)), Some(build(&control)))
    } else {
        (None, None)
    };

    let mut neighbor_sets = Vec::with_capacity(ds.n());
    let mut distances = Vec::with_capacity(ds.n());
    for i in 0..ds.n() {
        let (pool, tree) = if ds.is_treated(i) {
            (&control, tree_c.as_ref())
        } else {
            (&treated, tree_t.as_ref())
        };
        let found = match tree {
            Some(t) => t.nearest(points[i], k),
            None => brute_force(&points, pool, points[i], k),
        };
        neighbor_sets.push(found.iter().map(|f| f.0).collect());
        distances.push(found.iter().map(|f| f.1).collect());
    }
    Ok(MatchResult {
        k,
        neighbor_sets,
        distances,
        clamped,
    })
}

/// `y_tilde_i = (2 z_i - 1) * (y_i - mean of y over the neighbors of i)`.
pub fn proxy_ite(ds: &Dataset, m: &MatchResult) -> Result<ProxyEffects> {
    if m.neighbor_sets.len() != ds.n() {
        return Err(CateError::InvalidData("match result does not belong to this dataset".into()));
    }
    let y = ds.y();
    let y_tilde = (0..ds.n())
        .map(|i| {
            let set = &m.neighbor_sets[i];
            let mean = set.iter().map(|&j| y[j]).sum::<f64>() / set.len() as f64;
            let sign = if ds.is_treated(i) { 1.0 } else { -1.0 };
            sign * (y[i] - mean)
        })
        .collect();
    Ok(ProxyEffects { y_tilde })
}

/// Debug dump: one `(unit, rank, neighbor, distance)` row per match.
pub fn write_match_csv<W: Write>(writer: W, m: &MatchResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["unit", "rank", "neighbor", "distance"])?;
    for (i, (set, dist)) in m.neighbor_sets.iter().zip(&m.distances).enumerate() {
        for (r, (j, d)) in set.iter().zip(dist).enumerate() {
            w.write_record(&[i.to_string(), (r + 1).to_string(), j.to_string(), d.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
