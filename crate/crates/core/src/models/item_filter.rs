use super::{ScoreVector, Scorer};
use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;

/// Training-free item–item filter: `r_u C~`, where `C = R^T R` is the item
/// co-occurrence matrix of the train graph and
/// `C~[j][i] = C[j][i] / (deg(j)^s * deg(i)^s)` for smoothing exponent `s`.
pub fn item_filter_score(graph: &BipartiteGraph, user: usize, smoothing: f64) -> Result<Vec<f64>> {
    if user >= graph.num_users() {
        return Err(Error::IndexOutOfRange {
            what: "users",
            index: user,
            len: graph.num_users(),
        });
    }
    let mut scores = vec![0.0; graph.num_items()];
    for &j in graph.items_of(user) {
        let dj = (graph.item_degree(j) as f64).powf(smoothing);
        for &v in graph.users_of(j) {
            for &i in graph.items_of(v) {
                scores[i] += 1.0 / dj;
            }
        }
    }
    for (i, s) in scores.iter_mut().enumerate() {
        if *s != 0.0 {
            *s /= (graph.item_degree(i) as f64).powf(smoothing);
        }
    }
    Ok(scores)
}

pub struct ItemFilterScorer<'a> {
    pub graph: &'a BipartiteGraph,
    pub smoothing: f64,
}

impl Scorer for ItemFilterScorer<'_> {
    fn num_items(&self) -> usize {
        self.graph.num_items()
    }

    fn score(&self, user: usize) -> Result<ScoreVector> {
        Ok(ScoreVector {
            user,
            scores: item_filter_score(self.graph, user, self.smoothing)?,
            branch_mask: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_history_scores_zero() {
        let g = BipartiteGraph::from_edges(2, 3, &[(0, 0), (0, 1)]).unwrap();
        assert_eq!(item_filter_score(&g, 1, 0.5).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn two_by_two_hand_computation() {
        // R = [[1,1],[0,1]] -> C = [[1,1],[1,2]], deg = (1,2)
        // s = 1: C~ = [[1, 1/2], [1/2, 1/2]]
        let g = BipartiteGraph::from_edges(2, 2, &[(0, 0), (0, 1), (1, 1)]).unwrap();
        assert_eq!(item_filter_score(&g, 0, 1.0).unwrap(), vec![1.5, 1.0]);
        assert_eq!(item_filter_score(&g, 1, 1.0).unwrap(), vec![0.5, 0.5]);
        // s = 0: raw co-occurrence rows
        assert_eq!(item_filter_score(&g, 1, 0.0).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn train_items_positive() {
        let g = BipartiteGraph::from_edges(3, 4, &[(0, 0), (0, 2), (1, 2), (2, 3)]).unwrap();
        let s = item_filter_score(&g, 0, 0.5).unwrap();
        assert!(s[0] > 0.0 && s[2] > 0.0);
        assert_eq!(s[3], 0.0);
    }
}
