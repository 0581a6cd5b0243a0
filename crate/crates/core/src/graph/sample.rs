use std::collections::{HashMap, HashSet};

use rand::seq::index;

use super::{BipartiteGraph, Node};
use crate::error::{Error, Result};
use crate::rng::rng_for;

/// Fanout value that never truncates a neighbor list.
pub const UNLIMITED: usize = usize::MAX;

/// Per-hop neighbor caps; `caps[h]` bounds how many neighbors each node on
/// hop `h` expands into hop `h + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fanouts(Vec<usize>);

impl Fanouts {
    pub fn new(caps: Vec<usize>) -> Result<Self> {
        if caps.is_empty() {
            return Err(Error::Graph("fanouts must list at least one hop".into()));
        }
        if let Some(h) = caps.iter().position(|&c| c == 0) {
            return Err(Error::Graph(format!("fanout for hop {} must be >= 1", h + 1)));
        }
        Ok(Self(caps))
    }

    pub fn unlimited(hops: usize) -> Self {
        Self(vec![UNLIMITED; hops.max(1)])
    }

    pub fn hops(&self) -> usize {
        self.0.len()
    }

    pub fn caps(&self) -> &[usize] {
        &self.0
    }
}

/// Fanout-limited k-hop neighborhood around one seed user, with a dense
/// local index space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledSubgraph {
    pub seed_user: usize,
    pub hops: usize,
    /// `nodes_per_hop[h]` holds the nodes first reached at hop `h`; hop 0 is
    /// the seed alone.
    pub nodes_per_hop: Vec<Vec<Node>>,
    /// Sampled edges as `(user local index, item local index)`, in discovery
    /// order, without duplicates.
    pub local_edges: Vec<(usize, usize)>,
    pub local_to_global: Vec<Node>,
    pub global_to_local: HashMap<Node, usize>,
    /// Global indices of every item in the subgraph, sorted ascending.
    pub contained_items: Vec<usize>,
}

impl SampledSubgraph {
    pub fn num_nodes(&self) -> usize {
        self.local_to_global.len()
    }

    pub fn contains_item(&self, item: usize) -> bool {
        self.contained_items.binary_search(&item).is_ok()
    }

    pub fn local_of(&self, node: Node) -> Option<usize> {
        self.global_to_local.get(&node).copied()
    }
}

/// Samples the subgraph of `user`: each node on hop `h` keeps a uniform
/// sample without replacement of at most `fanouts[h]` of its neighbors. The
/// random stream is derived from `(rng_seed, user)` only, so the result does
/// not depend on call order.
pub fn sample_subgraph(
    graph: &BipartiteGraph,
    user: usize,
    fanouts: &Fanouts,
    rng_seed: u64,
) -> SampledSubgraph {
    let mut rng = rng_for(rng_seed, &[user as u64]);
    let seed = Node::User(user);
    let mut local_to_global = vec![seed];
    let mut global_to_local = HashMap::from([(seed, 0usize)]);
    let mut nodes_per_hop = vec![vec![seed]];
    let mut local_edges = Vec::new();
    let mut edge_seen = HashSet::new();
    let mut frontier = vec![seed];

    for &cap in fanouts.caps() {
        let mut next = Vec::new();
        for &node in &frontier {
            let nbrs = graph.neighbors(node);
            let picked: Vec<usize> = if cap >= nbrs.len() {
                nbrs.to_vec()
            } else {
                let mut idx = index::sample(&mut rng, nbrs.len(), cap).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|k| nbrs[k]).collect()
            };
            let src_local = global_to_local[&node];
            for w in picked {
                let target = match node {
                    Node::User(_) => Node::Item(w),
                    Node::Item(_) => Node::User(w),
                };
                let dst_local = *global_to_local.entry(target).or_insert_with(|| {
                    local_to_global.push(target);
                    next.push(target);
                    local_to_global.len() - 1
                });
                let edge = match node {
                    Node::User(_) => (src_local, dst_local),
                    Node::Item(_) => (dst_local, src_local),
                };
                if edge_seen.insert(edge) {
                    local_edges.push(edge);
                }
            }
        }
        nodes_per_hop.push(next.clone());
        frontier = next;
    }

    let mut contained_items: Vec<usize> = local_to_global
        .iter()
        .filter_map(|n| match n {
            Node::Item(i) => Some(*i),
            Node::User(_) => None,
        })
        .collect();
    contained_items.sort_unstable();

    SampledSubgraph {
        seed_user: user,
        hops: fanouts.hops(),
        nodes_per_hop,
        local_edges,
        local_to_global,
        global_to_local,
        contained_items,
    }
}
