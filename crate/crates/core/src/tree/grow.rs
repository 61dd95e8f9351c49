use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{Axis, CateTree, Split, TreeNode, SCHEMA_VERSION};
use crate::data::ScoredSample;
use crate::error::{CateError, Result};
use crate::matching::ProxyEffects;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowParams {
    /// Both children of a split must hold at least this many units.
    pub min_node_size: usize,
    /// A split must reduce the sum of squares by at least
    /// `cp_floor * root sum of squares`.
    pub cp_floor: f64,
    /// Axes allowed to split on, indexed by [`Axis::index`].
    pub axes: [bool; 2],
}

impl Default for GrowParams {
    fn default() -> Self {
        GrowParams {
            min_node_size: 20,
            cp_floor: 0.01,
            axes: [true, true],
        }
    }
}

impl GrowParams {
    pub fn single_axis(self, axis: Axis) -> Self {
        let mut axes = [false; 2];
        axes[axis.index()] = true;
        GrowParams { axes, ..self }
    }
}

struct Builder<'a> {
    points: &'a [[f64; 2]],
    y: &'a [f64],
    params: GrowParams,
    root_sse: f64,
    nodes: Vec<TreeNode>,
}

/// Order units by `(value on axis, value on other axis, response)` so that
/// sums are accumulated in an order independent of input row order.
fn canonical_cmp(points: &[[f64; 2]], y: &[f64], axis: usize, a: usize, b: usize) -> Ordering {
    let other = 1 - axis;
    points[a][axis]
        .total_cmp(&points[b][axis])
        .then(points[a][other].total_cmp(&points[b][other]))
        .then(y[a].total_cmp(&y[b]))
}

fn mean_sse(y: &[f64], members: &[usize]) -> (f64, f64) {
    let n = members.len() as f64;
    let mean = members.iter().map(|&i| y[i]).sum::<f64>() / n;
    let sse = members.iter().map(|&i| (y[i] - mean) * (y[i] - mean)).sum();
    (mean, sse)
}

struct Candidate {
    axis: usize,
    threshold: f64,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl Builder<'_> {
    fn best_split(&self, sorted0: &[usize], mean: f64, sse: f64) -> Option<Candidate> {
        let n = sorted0.len();
        let min = self.params.min_node_size.max(1);
        if n < 2 * min {
            return None;
        }
        let mut best: Option<Candidate> = None;
        for axis in 0..2 {
            if !self.params.axes[axis] {
                continue;
            }
            let mut order = sorted0.to_vec();
            if axis != 0 {
                order.sort_by(|&a, &b| canonical_cmp(self.points, self.y, axis, a, b));
            }
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            let centered: Vec<f64> = order.iter().map(|&i| self.y[i] - mean).collect();
            let total1: f64 = centered.iter().sum();
            let total2: f64 = centered.iter().map(|c| c * c).sum();
            let mut best_here: Option<(usize, f64)> = None;
            for k in 0..n - 1 {
                s1 += centered[k];
                s2 += centered[k] * centered[k];
                let nl = k + 1;
                let nr = n - nl;
                if nl < min {
                    continue;
                }
                if nr < min {
                    break;
                }
                let v = self.points[order[k]][axis];
                let v_next = self.points[order[k + 1]][axis];
                if v == v_next {
                    continue;
                }
                let r1 = total1 - s1;
                let r2 = total2 - s2;
                let sse_l = (s2 - s1 * s1 / nl as f64).max(0.0);
                let sse_r = (r2 - r1 * r1 / nr as f64).max(0.0);
                let gain = sse - sse_l - sse_r;
                if best_here.is_none_or(|(_, g)| gain > g) {
                    best_here = Some((k, gain));
                }
            }
            if let Some((k, gain)) = best_here {
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let v = self.points[order[k]][axis];
                    let v_next = self.points[order[k + 1]][axis];
                    let mut threshold = v + (v_next - v) / 2.0;
                    if threshold >= v_next {
                        threshold = v;
                    }
                    best = Some(Candidate {
                        axis,
                        threshold,
                        gain,
                        left: order[..=k].to_vec(),
                        right: order[k + 1..].to_vec(),
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, mut members: Vec<usize>) -> usize {
        members.sort_by(|&a, &b| canonical_cmp(self.points, self.y, 0, a, b));
        let (mean, sse) = mean_sse(self.y, &members);
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            id,
            n: members.len(),
            effect: mean,
            sse,
            split: None,
        });
        if sse <= 0.0 {
            return id;
        }
        let Some(c) = self.best_split(&members, mean, sse) else {
            return id;
        };
        if !(c.gain > 0.0) || c.gain < self.params.cp_floor * self.root_sse {
            return id;
        }
        let left = self.build(c.left);
        let right = self.build(c.right);
        self.nodes[id].split = Some(Split {
            axis: Axis::ALL[c.axis],
            threshold: c.threshold,
            left,
            right,
        });
        id
    }
}

/// Grow a tree on the score pairs by greedy binary splitting.
///
/// Every node takes the `(axis, threshold)` with the largest reduction in
/// within-node sum of squares among midpoints between consecutive distinct
/// values; ties go to the propensity axis, then the lower threshold.
/// Growth stops at pure nodes, when no split leaves both children with
/// `min_node_size` units, or when the best reduction is below
/// `cp_floor * root sum of squares`.
pub fn grow_tree(scores: &ScoredSample, y_tilde: &ProxyEffects, params: GrowParams) -> Result<CateTree> {
    let n = scores.len();
    if y_tilde.y_tilde.len() != n {
        return Err(CateError::InvalidData(format!(
            "{} proxy effects for {n} score pairs",
            y_tilde.y_tilde.len()
        )));
    }
    if n == 0 {
        return Err(CateError::InvalidData("cannot grow a tree on zero units".into()));
    }
    if params.min_node_size == 0 {
        return Err(CateError::param("min_node_size", "must be at least 1"));
    }
    if !(params.cp_floor >= 0.0) {
        return Err(CateError::param("cp_floor", "must be non-negative"));
    }
    let points: Vec<[f64; 2]> = (0..n).map(|i| scores.point(i)).collect();
    if points.iter().flatten().any(|v| !v.is_finite()) || y_tilde.y_tilde.iter().any(|v| !v.is_finite()) {
        return Err(CateError::InvalidData("non-finite score or proxy effect".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let (_, root_sse) = mean_sse(&y_tilde.y_tilde, &all);
    let mut b = Builder {
        points: &points,
        y: &y_tilde.y_tilde,
        params,
        root_sse,
        nodes: Vec::new(),
    };
    b.build(all);
    Ok(CateTree {
        schema_version: SCHEMA_VERSION,
        grow: params,
        nodes: b.nodes,
        cp_selected: 0.0,
        complexity_path: Vec::new(),
    })
}
