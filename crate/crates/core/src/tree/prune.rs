//! Cost-complexity pruning with K-fold cross-validation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{grow_tree, CateTree, CpEntry, TreeNode};
use crate::data::ScoredSample;
use crate::error::{CateError, Result};
use crate::matching::ProxyEffects;
use crate::seed::labeled_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CpRule {
    /// Subtree with the smallest CV error; ties go to the smaller tree.
    #[default]
    MinCv,
    /// Smallest subtree within one standard error of the minimum.
    OneSe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneParams {
    pub folds: usize,
    pub seed: u64,
    pub rule: CpRule,
}

impl Default for PruneParams {
    fn default() -> Self {
        PruneParams {
            folds: 10,
            seed: 0,
            rule: CpRule::MinCv,
        }
    }
}

/// One subtree in the weakest-link sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneStep {
    /// Absolute complexity at which this subtree becomes optimal.
    pub alpha: f64,
    /// `collapsed[pos]` is true when the node at `tree.nodes[pos]` is a leaf
    /// of this subtree (or lies below one).
    pub collapsed: Vec<bool>,
    pub n_leaves: usize,
}

fn position(tree: &CateTree, id: usize) -> usize {
    tree.nodes.binary_search_by_key(&id, |n| n.id).expect("node id present")
}

/// Postorder pass: returns (sum of leaf SSE, leaf count) for the subtree at
/// `pos`, filling `g` with the weakest-link value of each internal node.
fn subtree_stats(tree: &CateTree, pos: usize, collapsed: &[bool], g: &mut [f64]) -> (f64, usize) {
    let node = &tree.nodes[pos];
    match node.split {
        Some(s) if !collapsed[pos] => {
            let (rl, ll) = subtree_stats(tree, position(tree, s.left), collapsed, g);
            let (rr, lr) = subtree_stats(tree, position(tree, s.right), collapsed, g);
            let r = rl + rr;
            let leaves = ll + lr;
            g[pos] = (node.sse - r) / (leaves - 1) as f64;
            (r, leaves)
        }
        _ => (node.sse, 1),
    }
}

fn mark_below(tree: &CateTree, pos: usize, collapsed: &mut [bool]) {
    collapsed[pos] = true;
    if let Some(s) = tree.nodes[pos].split {
        mark_below(tree, position(tree, s.left), collapsed);
        mark_below(tree, position(tree, s.right), collapsed);
    }
}

/// Nested sequence of optimally pruned subtrees, from the full tree
/// (`alpha = 0`) to the root alone, by repeatedly collapsing the internal
/// nodes with the smallest per-leaf gain.
pub fn weakest_link_sequence(tree: &CateTree) -> Vec<PruneStep> {
    let m = tree.nodes.len();
    let mut collapsed = vec![false; m];
    let mut steps = Vec::new();
    let mut alpha = 0.0;
    loop {
        let mut g = vec![f64::INFINITY; m];
        let (_, leaves) = subtree_stats(tree, 0, &collapsed, &mut g);
        steps.push(PruneStep {
            alpha,
            collapsed: collapsed.clone(),
            n_leaves: leaves,
        });
        if leaves == 1 {
            break;
        }
        let next = g.iter().cloned().fold(f64::INFINITY, f64::min).max(alpha);
        let cut = next + 1e-12 * next.abs().max(f64::MIN_POSITIVE);
        for pos in 0..m {
            if g[pos] <= cut && !collapsed[pos] {
                mark_below(tree, pos, &mut collapsed);
                // the node itself stays as the new leaf
                collapsed[pos] = true;
            }
        }
        alpha = next;
    }
    steps
}

fn predict_masked(tree: &CateTree, collapsed: &[bool], point: [f64; 2]) -> f64 {
    let mut pos = 0;
    loop {
        let node = &tree.nodes[pos];
        match node.split {
            Some(s) if !collapsed[pos] => {
                let next = if point[s.axis.index()] <= s.threshold { s.left } else { s.right };
                pos = position(tree, next);
            }
            _ => return node.effect,
        }
    }
}

/// Index of the subtree that is optimal at complexity `alpha`.
fn step_for_alpha(steps: &[PruneStep], alpha: f64) -> usize {
    steps.iter().rposition(|s| s.alpha <= alpha).unwrap_or(0)
}

/// Materialize a subtree, keeping node ids.
fn extract(tree: &CateTree, collapsed: &[bool]) -> Vec<TreeNode> {
    let mut out = Vec::new();
    let mut stack = vec![0usize];
    while let Some(pos) = stack.pop() {
        let mut node = tree.nodes[pos].clone();
        if collapsed[pos] {
            node.split = None;
        }
        if let Some(s) = node.split {
            stack.push(position(tree, s.right));
            stack.push(position(tree, s.left));
        }
        out.push(node);
    }
    out.sort_by_key(|n| n.id);
    out
}

/// Choose a subtree of `tree` by K-fold cross-validated squared error over
/// the weakest-link sequence.
///
/// Each fold regrows a tree on its training part with the same growth
/// parameters and prunes it at the geometric mean of consecutive relative
/// complexity values of the full tree's sequence.
pub fn prune_tree(tree: &CateTree, scores: &ScoredSample, y_tilde: &ProxyEffects, params: PruneParams) -> Result<CateTree> {
    let n = scores.len();
    let y = &y_tilde.y_tilde;
    if y.len() != n || tree.root().n != n {
        return Err(CateError::InvalidData("pruning data does not match the grown tree".into()));
    }
    if params.folds < 2 {
        return Err(CateError::param("folds", "need at least 2"));
    }
    if params.folds > n {
        return Err(CateError::param("folds", format!("{} folds for {n} units", params.folds)));
    }
    let steps = weakest_link_sequence(tree);
    let root_sse = tree.root().sse;
    if steps.len() == 1 {
        let mut out = tree.clone();
        out.cp_selected = 0.0;
        out.complexity_path = vec![CpEntry {
            cp: 0.0,
            n_leaves: 1,
            cv_error: f64::NAN,
            cv_se: f64::NAN,
        }];
        return Ok(out);
    }
    let rel = |a: f64| if root_sse > 0.0 { a / root_sse } else { 0.0 };
    let cps: Vec<f64> = steps.iter().map(|s| rel(s.alpha)).collect();
    // complexity at which each step is evaluated on the fold trees
    let probe: Vec<f64> = (0..steps.len())
        .map(|k| if k + 1 < steps.len() { (cps[k] * cps[k + 1]).sqrt() } else { f64::INFINITY })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut labeled_rng(params.seed, "cv-fold"));
    let mut fold = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        fold[i] = r % params.folds;
    }

    let mut sq = vec![vec![0.0; n]; steps.len()];
    for f in 0..params.folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        let sub_scores = scores.select(&train);
        let sub_y = ProxyEffects {
            y_tilde: train.iter().map(|&i| y[i]).collect(),
        };
        let fold_tree = grow_tree(&sub_scores, &sub_y, tree.grow)?;
        let fold_steps = weakest_link_sequence(&fold_tree);
        let fold_root = fold_tree.root().sse;
        for (k, sq_k) in sq.iter_mut().enumerate() {
            let alpha = if probe[k].is_finite() { probe[k] * fold_root } else { f64::INFINITY };
            let mask = &fold_steps[step_for_alpha(&fold_steps, alpha)].collapsed;
            for &i in &test {
                let pred = predict_masked(&fold_tree, mask, scores.point(i));
                sq_k[i] = (y[i] - pred) * (y[i] - pred);
            }
        }
    }

    let mut path = Vec::with_capacity(steps.len());
    for (k, s) in steps.iter().enumerate() {
        let mean = sq[k].iter().sum::<f64>() / n as f64;
        let var = sq[k].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n.max(2) - 1) as f64;
        path.push(CpEntry {
            cp: cps[k],
            n_leaves: s.n_leaves,
            cv_error: mean,
            cv_se: (var / n as f64).sqrt(),
        });
    }
    let mut best = 0;
    for k in 1..path.len() {
        if path[k].cv_error <= path[best].cv_error {
            best = k;
        }
    }
    let chosen = match params.rule {
        CpRule::MinCv => best,
        CpRule::OneSe => {
            let limit = path[best].cv_error + path[best].cv_se;
            (0..path.len()).rev().find(|&k| path[k].cv_error <= limit).unwrap_or(best)
        }
    };
    Ok(CateTree {
        schema_version: tree.schema_version,
        grow: tree.grow,
        nodes: extract(tree, &steps[chosen].collapsed),
        cp_selected: cps[chosen],
        complexity_path: path,
    })
}
