//! Masked top-K ranking and Recall@K / nDCG@K.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::{InteractionDataset, Split};
use crate::error::{Error, Result};
use crate::models::{ScoreVector, Scorer};

/// Top-K list of one user, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub user: usize,
    pub cutoff: usize,
    pub topk_items: Vec<usize>,
    pub topk_scores: Vec<f64>,
}

/// Descending by score, ascending item index on ties.
fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Selects the `k` best items after removing `masked` (the user's known
/// train items) from contention. Returns fewer than `k` items when not
/// enough remain.
pub fn rank_topk(scores: &ScoreVector, masked: &[usize], k: usize) -> RankingResult {
    let mut is_masked = vec![false; scores.scores.len()];
    for &i in masked {
        if let Some(m) = is_masked.get_mut(i) {
            *m = true;
        }
    }
    let mut cand: Vec<(usize, f64)> = scores
        .scores
        .iter()
        .copied()
        .enumerate()
        .filter(|(i, _)| !is_masked[*i])
        .collect();
    if k > 0 && cand.len() > k {
        cand.select_nth_unstable_by(k - 1, rank_order);
    }
    cand.truncate(k);
    cand.sort_unstable_by(rank_order);
    RankingResult {
        user: scores.user,
        cutoff: k,
        topk_items: cand.iter().map(|c| c.0).collect(),
        topk_scores: cand.iter().map(|c| c.1).collect(),
    }
}

fn hits(result: &RankingResult, positives: &[usize]) -> usize {
    result.topk_items.iter().filter(|i| positives.contains(i)).count()
}

/// `|top-K ∩ positives| / |positives|`; `positives` must be non-empty and
/// free of duplicates.
pub fn recall_at_k(result: &RankingResult, positives: &[usize]) -> f64 {
    if positives.is_empty() {
        return 0.0;
    }
    hits(result, positives) as f64 / positives.len() as f64
}

/// Binary-relevance nDCG with discount `1 / log2(rank + 1)`, ranks from 1,
/// normalised by the ideal DCG over `min(K, |positives|)` hits.
pub fn ndcg_at_k(result: &RankingResult, positives: &[usize]) -> f64 {
    let ideal_hits = result.cutoff.min(positives.len());
    if ideal_hits == 0 {
        return 0.0;
    }
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = result
        .topk_items
        .iter()
        .enumerate()
        .filter(|(_, i)| positives.contains(i))
        .map(|(r, _)| discount(r + 1))
        .sum();
    let idcg: f64 = (1..=ideal_hits).map(discount).sum();
    dcg / idcg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Recall,
    Ndcg,
}

/// A metric name with its cutoff, written `Recall@20` or `nDCG@20`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MetricTag {
    pub kind: MetricKind,
    pub k: usize,
}

impl Default for MetricTag {
    fn default() -> Self {
        Self {
            kind: MetricKind::Recall,
            k: 20,
        }
    }
}

impl fmt::Display for MetricTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            MetricKind::Recall => "Recall",
            MetricKind::Ndcg => "nDCG",
        };
        write!(f, "{name}@{}", self.k)
    }
}

impl FromStr for MetricTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (name, k) = s
            .split_once('@')
            .ok_or_else(|| format!("metric {s:?} must look like Recall@20"))?;
        let kind = match name.to_ascii_lowercase().as_str() {
            "recall" => MetricKind::Recall,
            "ndcg" => MetricKind::Ndcg,
            _ => return Err(format!("unknown metric {name:?}")),
        };
        let k: usize = k.parse().map_err(|_| format!("bad cutoff in {s:?}"))?;
        if k == 0 {
            return Err(format!("cutoff in {s:?} must be >= 1"));
        }
        Ok(Self { kind, k })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserMetrics {
    pub user: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub hits: usize,
    pub num_positives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub cutoff: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub users_evaluated: usize,
    pub per_user: Vec<UserMetrics>,
}

impl MetricReport {
    pub fn value(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::Recall => self.recall,
            MetricKind::Ndcg => self.ndcg,
        }
    }
}

/// Scores every user with hidden positives in `split` and averages both
/// metrics with equal per-user weight. Known interactions from the other
/// non-target splits (train, plus validation when evaluating test) are
/// masked.
pub fn evaluate(scorer: &dyn Scorer, dataset: &InteractionDataset, k: usize, split: Split) -> Result<MetricReport> {
    if k == 0 {
        return Err(Error::Eval("cutoff must be >= 1".into()));
    }
    if scorer.num_items() != dataset.num_items {
        return Err(Error::Eval(format!(
            "scorer covers {} items, dataset has {}",
            scorer.num_items(),
            dataset.num_items
        )));
    }
    let positives = dataset.items_by_user(split);
    let mut masked = dataset.items_by_user(Split::Train);
    if split == Split::Test && dataset.has_validation() {
        for (u, items) in dataset.items_by_user(Split::Validation).into_iter().enumerate() {
            masked[u].extend(items);
        }
    }
    let users: Vec<usize> = (0..dataset.num_users).filter(|&u| !positives[u].is_empty()).collect();
    if users.is_empty() {
        return Err(Error::Eval(format!("no user has {split:?} positives")));
    }
    let per_user = users
        .par_iter()
        .map(|&u| {
            let sv = scorer.score(u)?;
            let ranked = rank_topk(&sv, &masked[u], k);
            let pos = &positives[u];
            Ok(UserMetrics {
                user: u,
                recall: recall_at_k(&ranked, pos),
                ndcg: ndcg_at_k(&ranked, pos),
                hits: hits(&ranked, pos),
                num_positives: pos.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // canonical user order keeps the means bit-stable
    let n = per_user.len() as f64;
    let recall = per_user.iter().map(|m| m.recall).sum::<f64>() / n;
    let ndcg = per_user.iter().map(|m| m.ndcg).sum::<f64>() / n;
    Ok(MetricReport {
        cutoff: k,
        recall,
        ndcg,
        users_evaluated: per_user.len(),
        per_user,
    })
}

/// Per-user detail rows: `user<TAB>recall<TAB>ndcg<TAB>hits<TAB>num_positives`.
pub fn write_per_user_tsv(report: &MetricReport, path: &Path) -> Result<()> {
    let mut out = String::from("user\trecall\tndcg\thits\tnum_positives\n");
    for m in &report.per_user {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            m.user, m.recall, m.ndcg, m.hits, m.num_positives
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(scores: Vec<f64>) -> ScoreVector {
        ScoreVector {
            user: 0,
            scores,
            branch_mask: None,
        }
    }

    #[test]
    fn topk_basic_and_masked() {
        let r = rank_topk(&sv(vec![3.0, 1.0, 2.0]), &[], 2);
        assert_eq!(r.topk_items, vec![0, 2]);
        assert_eq!(r.topk_scores, vec![3.0, 2.0]);
        let r = rank_topk(&sv(vec![3.0, 1.0, 2.0]), &[0], 2);
        assert_eq!(r.topk_items, vec![2, 1]);
    }

    #[test]
    fn ties_break_by_item_index() {
        let r = rank_topk(&sv(vec![1.0, 2.0, 2.0, 1.0]), &[], 3);
        assert_eq!(r.topk_items, vec![1, 2, 0]);
    }

    #[test]
    fn partial_when_few_candidates() {
        let r = rank_topk(&sv(vec![1.0, 2.0, 3.0]), &[0, 2], 5);
        assert_eq!(r.topk_items, vec![1]);
    }

    fn result(items: Vec<usize>, k: usize) -> RankingResult {
        RankingResult {
            user: 0,
            cutoff: k,
            topk_scores: vec![0.0; items.len()],
            topk_items: items,
        }
    }

    #[test]
    fn recall_hand_values() {
        // A=0, B=1, X=2, Y=3
        assert_eq!(recall_at_k(&result(vec![0, 2, 1], 3), &[0, 1]), 1.0);
        assert_eq!(recall_at_k(&result(vec![0, 2, 3], 3), &[0, 1]), 0.5);
        assert_eq!(recall_at_k(&result(vec![2, 3], 2), &[0, 1]), 0.0);
    }

    #[test]
    fn ndcg_hand_values() {
        assert_eq!(ndcg_at_k(&result(vec![0, 1, 2], 3), &[0, 1]), 1.0);
        assert_eq!(ndcg_at_k(&result(vec![2, 3], 2), &[0, 1]), 0.0);
        let v = ndcg_at_k(&result(vec![0, 2, 1], 3), &[0, 1]);
        let expected = (1.0 + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.91972).abs() < 1e-5);
    }

    #[test]
    fn metric_tags() {
        let t: MetricTag = "Recall@20".parse().unwrap();
        assert_eq!(t, MetricTag::default());
        assert_eq!("nDCG@10".parse::<MetricTag>().unwrap().to_string(), "nDCG@10");
        assert!("Precision@5".parse::<MetricTag>().is_err());
        assert!("Recall@0".parse::<MetricTag>().is_err());
    }
}
