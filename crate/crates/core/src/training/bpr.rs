use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::tensor::{NodeId, Tape};

/// `-ln sigmoid(x)`, i.e. `ln(1 + e^-x)`, without overflow for large |x|.
pub fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Mean of `-ln sigmoid(pos - neg)` over the batch.
pub fn bpr_loss(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.len() != neg_scores.len() {
        return Err(Error::Shape(format!(
            "{} positive vs {} negative scores",
            pos_scores.len(),
            neg_scores.len()
        )));
    }
    if pos_scores.is_empty() {
        return Err(Error::Shape("BPR loss of an empty batch".into()));
    }
    let total: f64 = pos_scores
        .iter()
        .zip(neg_scores)
        .map(|(p, n)| neg_log_sigmoid(p - n))
        .sum();
    Ok(total / pos_scores.len() as f64)
}

/// Tape form of [`bpr_loss`] for `n x 1` score columns.
pub fn bpr_loss_on_tape(tape: &mut Tape, pos: NodeId, neg: NodeId) -> Result<NodeId> {
    let diff = tape.sub(neg, pos)?;
    let sp = tape.softplus(diff)?;
    tape.mean(sp)
}

/// `count` distinct items the user has no train edge with, uniformly.
pub fn sample_negatives<R: Rng>(
    graph: &BipartiteGraph,
    user: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let seen = graph.items_of(user);
    let n = graph.num_items();
    let available = n - seen.len();
    if available == 0 {
        return Err(Error::Training(format!(
            "user {user} interacted with all {n} items; no negative exists"
        )));
    }
    if count > available {
        return Err(Error::Training(format!(
            "user {user} has {available} candidate negatives, {count} requested"
        )));
    }
    if seen.len() * 2 <= n && count * 4 <= available {
        // sparse users: rejection sampling is cheap and exact
        let mut picked = Vec::with_capacity(count);
        let mut taken = HashSet::with_capacity(count);
        while picked.len() < count {
            let i = rng.gen_range(0..n);
            if seen.binary_search(&i).is_err() && taken.insert(i) {
                picked.push(i);
            }
        }
        Ok(picked)
    } else {
        let pool: Vec<usize> = (0..n).filter(|i| seen.binary_search(i).is_err()).collect();
        Ok(index::sample(rng, pool.len(), count)
            .into_iter()
            .map(|k| pool[k])
            .collect())
    }
}
