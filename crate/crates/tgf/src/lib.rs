//! Streaming anomaly detection on link streams using trivial graph features.
//!
//! Each incoming link `(t, u, v)` is characterized against one or more
//! weighted history graphs (windowed by duration or by occurrence count),
//! producing 30 integer features per graph in O(1) time per link. A random
//! forest trained on labeled streams (real labels or random injections)
//! scores links as anomalous, and the evaluation layer implements the
//! chronological split / undersampling / ROC-AUC protocol plus sliding
//! windows and permutation feature importance.

pub mod csvio;
pub mod dsc;
pub mod eval;
pub mod history;
pub mod learn;
pub mod seeds;
pub mod streamio;
pub mod synth;

pub use dsc::Dsc;
pub use history::{FeatureRow, HistoryConfig, HistoryGraph, Pipeline, TimestampedLink, WindowKind};
pub use learn::{ForestModel, ForestParams};
pub use streamio::{Label, LabeledLink};
