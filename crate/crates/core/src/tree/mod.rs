//! Regression tree over the two scores.
//!
//! A [`CateTree`] partitions the `(propensity, prognostic)` plane into
//! axis-aligned rectangles, each carrying a constant effect (the mean proxy
//! effect of its training units). A point goes left when its coordinate is
//! `<= threshold`.

mod export;
mod grow;
mod prune;

use serde::{Deserialize, Serialize};

use crate::error::{CateError, Result};
pub use export::{export_grid, EffectGrid};
pub use grow::{grow_tree, GrowParams};
pub use prune::{prune_tree, weakest_link_sequence, CpRule, PruneParams, PruneStep};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Propensity,
    Prognostic,
}

impl Axis {
    pub const ALL: [Axis; 2] = [Axis::Propensity, Axis::Prognostic];

    pub fn index(self) -> usize {
        match self {
            Axis::Propensity => 0,
            Axis::Prognostic => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Propensity => "propensity",
            Axis::Prognostic => "prognostic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub axis: Axis,
    pub threshold: f64,
    /// Child node ids.
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Stable id: the node's preorder position in the grown tree. Pruning
    /// keeps ids, so a pruned tree's ids are a subset of the grown tree's.
    pub id: usize,
    pub n: usize,
    /// Mean proxy effect of the node's training units.
    pub effect: f64,
    /// Within-node sum of squared deviations from `effect`.
    pub sse: f64,
    pub split: Option<Split>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpEntry {
    /// Complexity parameter relative to the root sum of squares.
    pub cp: f64,
    pub n_leaves: usize,
    pub cv_error: f64,
    pub cv_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateTree {
    pub schema_version: u32,
    pub grow: GrowParams,
    /// Nodes in preorder (ascending id); `nodes[0]` is the root.
    pub nodes: Vec<TreeNode>,
    pub cp_selected: f64,
    pub complexity_path: Vec<CpEntry>,
}

impl CateTree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        let pos = self
            .nodes
            .binary_search_by_key(&id, |n| n.id)
            .expect("child id present in tree");
        &self.nodes[pos]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    /// `(axis, threshold)` of every internal node, in preorder.
    pub fn splits(&self) -> Vec<(Axis, f64)> {
        self.nodes.iter().filter_map(|n| n.split.map(|s| (s.axis, s.threshold))).collect()
    }

    /// Id of the leaf that `point = [e, p]` falls into.
    pub fn leaf_of(&self, point: [f64; 2]) -> usize {
        let mut node = self.root();
        while let Some(s) = node.split {
            // NaN compares false and goes right
            node = if point[s.axis.index()] <= s.threshold {
                self.node(s.left)
            } else {
                self.node(s.right)
            };
        }
        node.id
    }

    pub fn predict_point(&self, point: [f64; 2]) -> f64 {
        self.node(self.leaf_of(point)).effect
    }

    /// Leaf effect for every `(e_hat[i], p_hat[i])`.
    pub fn predict(&self, scores: &crate::data::ScoredSample) -> Vec<f64> {
        (0..scores.len()).map(|i| self.predict_point(scores.point(i))).collect()
    }

    /// A one-leaf tree; handy for tests and degenerate inputs.
    pub fn constant(effect: f64, n: usize) -> Self {
        CateTree {
            schema_version: SCHEMA_VERSION,
            grow: GrowParams::default(),
            nodes: vec![TreeNode {
                id: 0,
                n,
                effect,
                sse: 0.0,
                split: None,
            }],
            cp_selected: 0.0,
            complexity_path: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: CateTree = serde_json::from_str(s)?;
        if t.schema_version != SCHEMA_VERSION {
            return Err(CateError::Schema(format!("unsupported tree schema_version {}", t.schema_version)));
        }
        t.check_links()?;
        Ok(t)
    }

    fn check_links(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(CateError::Schema("tree has no nodes".into()));
        }
        if self.nodes.windows(2).any(|w| w[0].id >= w[1].id) {
            return Err(CateError::Schema("tree node ids must be strictly increasing".into()));
        }
        for n in &self.nodes {
            if let Some(s) = n.split {
                for c in [s.left, s.right] {
                    if c <= n.id || self.nodes.binary_search_by_key(&c, |m| m.id).is_err() {
                        return Err(CateError::Schema(format!("node {} links to missing child {c}", n.id)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Indented text rendering: one line per node with its rule, size and
    /// mean effect; leaves are marked with `*`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("node) split  n  effect\n      * denotes terminal node\n\n");
        self.write_text(self.root().id, 0, "root".to_string(), &mut out);
        out
    }

    fn write_text(&self, id: usize, depth: usize, rule: String, out: &mut String) {
        let node = self.node(id);
        let star = if node.is_leaf() { " *" } else { "" };
        out.push_str(&format!(
            "{}{}) {} {} {:.6}{}\n",
            "  ".repeat(depth),
            node.id,
            rule,
            node.n,
            node.effect,
            star
        ));
        if let Some(s) = node.split {
            let name = s.axis.name();
            self.write_text(s.left, depth + 1, format!("{name}<={}", s.threshold), out);
            self.write_text(s.right, depth + 1, format!("{name}>{}", s.threshold), out);
        }
    }
}
