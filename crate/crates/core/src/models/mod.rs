//! Scoring models: the fused ContextGNN head and three simplified
//! baselines behind a common [`Scorer`] interface.

pub mod checkpoint;
mod contextgnn;
mod item_filter;
mod lightgcn;
mod mf;

pub use contextgnn::{
    fused_scores, gnn_forward, pair_score, score_pairs, tower_score, ContextGnnParams, ContextGnnScorer,
    GnnOutput, Routing,
};
pub use item_filter::{item_filter_score, ItemFilterScorer};
pub(crate) use lightgcn::normalized_adjacency;
pub use lightgcn::{lightgcn_propagate, lightgcn_propagate_on_tape, LightGcnParams, LightGcnScorer};
pub use mf::{mf_bpr_score, MfParams, MfScorer};

use std::fmt;
use std::str::FromStr;

use crate::error::Result;

/// Which half of the fused head produced an item's score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Pair,
    Tower,
}

/// Scores of every item for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub user: usize,
    pub scores: Vec<f64>,
    /// Per-item routing; only the fused model fills this in.
    pub branch_mask: Option<Vec<Branch>>,
}

/// Read-only scoring with frozen parameters.
pub trait Scorer: Sync {
    fn num_items(&self) -> usize;
    fn score(&self, user: usize) -> Result<ScoreVector>;
}

/// The model families the experiment runner knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    ContextGnn,
    MfBpr,
    LightGcn,
    ItemFilter,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::ContextGnn,
        ModelKind::MfBpr,
        ModelKind::LightGcn,
        ModelKind::ItemFilter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::ContextGnn => "ContextGNN",
            ModelKind::MfBpr => "MFBPR",
            ModelKind::LightGcn => "LightGCN",
            ModelKind::ItemFilter => "ItemFilter",
        }
    }

    pub fn is_trainable(self) -> bool {
        !matches!(self, ModelKind::ItemFilter)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    /// Accepts the bare name or the `external.` prefixed form used in
    /// experiment configs, case-sensitively.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bare = s.strip_prefix("external.").unwrap_or(s);
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == bare)
            .ok_or_else(|| format!("unknown model {s:?}"))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
