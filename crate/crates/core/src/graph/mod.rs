//! Immutable bipartite user–item graph stored as CSR in both directions.

mod khop;
mod sample;
mod stats;

pub use khop::{khop_neighborhood, locality_score, Neighborhood};
pub use sample::{sample_subgraph, Fanouts, SampledSubgraph, UNLIMITED};
pub use stats::{dataset_stats, DatasetStats};

use crate::dataset::{InteractionDataset, Split};
use crate::error::{Error, Result};

/// A node of the bipartite graph, tagged with its side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    User(usize),
    Item(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Csr {
    /// `pairs` must be sorted by (row, col) and free of duplicates.
    fn from_sorted(rows: usize, pairs: impl Iterator<Item = (usize, usize)>) -> Self {
        let mut offsets = vec![0usize; rows + 1];
        let mut targets = Vec::new();
        for (r, c) in pairs {
            offsets[r + 1] += 1;
            targets.push(c);
        }
        for r in 0..rows {
            offsets[r + 1] += offsets[r];
        }
        Self { offsets, targets }
    }

    #[inline]
    fn row(&self, r: usize) -> &[usize] {
        &self.targets[self.offsets[r]..self.offsets[r + 1]]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    num_users: usize,
    num_items: usize,
    user_items: Csr,
    item_users: Csr,
}

impl BipartiteGraph {
    /// Builds the graph from raw `(user, item)` pairs. Duplicates collapse
    /// into one edge; an out-of-range pair is reported by its row number in
    /// `edges` (0-based).
    pub fn from_edges(num_users: usize, num_items: usize, edges: &[(usize, usize)]) -> Result<Self> {
        for (row, &(u, i)) in edges.iter().enumerate() {
            if u >= num_users {
                return Err(Error::Graph(format!(
                    "edge row {row}: user {u} out of range (num_users = {num_users})"
                )));
            }
            if i >= num_items {
                return Err(Error::Graph(format!(
                    "edge row {row}: item {i} out of range (num_items = {num_items})"
                )));
            }
        }
        let mut by_user = edges.to_vec();
        by_user.sort_unstable();
        by_user.dedup();
        let mut by_item: Vec<(usize, usize)> = by_user.iter().map(|&(u, i)| (i, u)).collect();
        by_item.sort_unstable();
        Ok(Self {
            num_users,
            num_items,
            user_items: Csr::from_sorted(num_users, by_user.into_iter()),
            item_users: Csr::from_sorted(num_items, by_item.into_iter()),
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_edges(&self) -> usize {
        self.user_items.targets.len()
    }

    /// Items of `user`, sorted ascending.
    #[inline]
    pub fn items_of(&self, user: usize) -> &[usize] {
        self.user_items.row(user)
    }

    /// Users of `item`, sorted ascending.
    #[inline]
    pub fn users_of(&self, item: usize) -> &[usize] {
        self.item_users.row(item)
    }

    #[inline]
    pub fn neighbors(&self, node: Node) -> &[usize] {
        match node {
            Node::User(u) => self.items_of(u),
            Node::Item(i) => self.users_of(i),
        }
    }

    pub fn has_edge(&self, user: usize, item: usize) -> bool {
        self.items_of(user).binary_search(&item).is_ok()
    }

    pub fn user_degree(&self, user: usize) -> usize {
        self.items_of(user).len()
    }

    pub fn item_degree(&self, item: usize) -> usize {
        self.users_of(item).len()
    }

    pub fn max_degree(&self) -> usize {
        let du = (0..self.num_users).map(|u| self.user_degree(u));
        let di = (0..self.num_items).map(|i| self.item_degree(i));
        du.chain(di).max().unwrap_or(0)
    }

    /// All edges as `(user, item)` in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_users).flat_map(move |u| self.items_of(u).iter().map(move |&i| (u, i)))
    }
}

/// Graph over the selected edge set of `dataset`.
pub fn build_graph(dataset: &InteractionDataset, split: Split) -> Result<BipartiteGraph> {
    BipartiteGraph::from_edges(dataset.num_users, dataset.num_items, &dataset.edges(split))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_graph_neighbors() {
        let g = BipartiteGraph::from_edges(2, 2, &[(0, 0), (0, 1), (1, 1)]).unwrap();
        assert_eq!(g.items_of(0), &[0, 1]);
        assert_eq!(g.users_of(1), &[0, 1]);
        assert_eq!(g.num_edges(), 3);
    }

    #[test]
    fn empty_edge_set() {
        let g = BipartiteGraph::from_edges(3, 4, &[]).unwrap();
        assert_eq!(g.num_edges(), 0);
        assert!((0..3).all(|u| g.user_degree(u) == 0));
        assert!((0..4).all(|i| g.item_degree(i) == 0));
    }

    #[test]
    fn duplicates_collapse() {
        let g = BipartiteGraph::from_edges(1, 1, &[(0, 0), (0, 0)]).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.items_of(0), &[0]);
    }

    #[test]
    fn out_of_range_names_row() {
        let err = BipartiteGraph::from_edges(2, 2, &[(0, 0), (1, 5)]).unwrap_err();
        assert!(err.to_string().contains("edge row 1"), "{err}");
    }

    #[test]
    fn build_from_dataset_splits() {
        let d = InteractionDataset::from_indices(2, 3, vec![(0, 0), (1, 1)], vec![(0, 2)]).unwrap();
        assert_eq!(build_graph(&d, Split::Train).unwrap().num_edges(), 2);
        assert_eq!(build_graph(&d, Split::Test).unwrap().num_edges(), 1);
        assert_eq!(build_graph(&d, Split::TrainTest).unwrap().num_edges(), 3);
    }

    proptest! {
        #[test]
        fn transpose_consistency(edges in prop::collection::vec((0usize..6, 0usize..7), 0..40)) {
            let g = BipartiteGraph::from_edges(6, 7, &edges).unwrap();
            let set: std::collections::BTreeSet<_> = edges.iter().copied().collect();
            prop_assert_eq!(g.num_edges(), set.len());
            for u in 0..6 {
                prop_assert!(g.items_of(u).windows(2).all(|w| w[0] < w[1]));
                for i in 0..7 {
                    let fwd = g.items_of(u).contains(&i);
                    prop_assert_eq!(fwd, g.users_of(i).contains(&u));
                    prop_assert_eq!(fwd, set.contains(&(u, i)));
                }
            }
        }
    }
}
