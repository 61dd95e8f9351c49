//! Heterogeneous treatment effect estimation on the plane of two scores.
//!
//! Units are summarized by an estimated propensity score and an estimated
//! prognostic score, matched across arms in that plane, and the resulting
//! proxy individual effects are fit with a pruned regression tree. The
//! leaves of the tree are the reported effect subgroups.

pub mod data;
pub mod error;
pub mod inference;
pub mod kdtree;
pub mod matching;
pub mod parallel;
pub mod pipeline;
pub mod scores;
pub mod seed;
pub mod simulation;
pub mod tree;

pub use data::{Dataset, ScoredSample};
pub use error::{CateError, Result};
pub use pipeline::{fit, FittedPipeline, KChoice, PipelineConfig, Prediction};
