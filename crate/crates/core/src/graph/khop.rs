use super::{BipartiteGraph, Node};
use crate::error::{Error, Result};

/// Nodes reachable from a seed user within `k` hops, seed excluded.
/// Odd hops land on items, even hops on users.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Neighborhood {
    /// Sorted ascending.
    pub users: Vec<usize>,
    /// Sorted ascending.
    pub items: Vec<usize>,
}

/// Exact breadth-first k-hop neighborhood of `user`.
pub fn khop_neighborhood(graph: &BipartiteGraph, user: usize, k: usize) -> Neighborhood {
    let mut seen_users = vec![false; graph.num_users()];
    let mut seen_items = vec![false; graph.num_items()];
    seen_users[user] = true;
    let mut frontier = vec![Node::User(user)];
    let mut out = Neighborhood::default();

    for _ in 0..k {
        let mut next = Vec::new();
        for &node in &frontier {
            match node {
                Node::User(u) => {
                    for &i in graph.items_of(u) {
                        if !seen_items[i] {
                            seen_items[i] = true;
                            out.items.push(i);
                            next.push(Node::Item(i));
                        }
                    }
                }
                Node::Item(i) => {
                    for &v in graph.users_of(i) {
                        if !seen_users[v] {
                            seen_users[v] = true;
                            out.users.push(v);
                            next.push(Node::User(v));
                        }
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    out.users.sort_unstable();
    out.items.sort_unstable();
    out
}

/// Average, over users with at least one hidden positive, of the fraction
/// of those positives already inside the user's exact k-hop neighborhood of
/// `graph` (normally the train graph).
///
/// `test_positives[u]` lists the hidden positive items of user `u`; users
/// beyond the end of the slice are treated as having none.
pub fn locality_score(graph: &BipartiteGraph, test_positives: &[Vec<usize>], k: usize) -> Result<f64> {
    if test_positives.len() > graph.num_users() {
        let extra = test_positives[graph.num_users()..].iter().position(|p| !p.is_empty());
        if let Some(off) = extra {
            return Err(Error::IndexOutOfRange {
                what: "graph users",
                index: graph.num_users() + off,
                len: graph.num_users(),
            });
        }
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for (user, positives) in test_positives.iter().enumerate().take(graph.num_users()) {
        if positives.is_empty() {
            continue;
        }
        let hood = khop_neighborhood(graph, user, k);
        let mut distinct = positives.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let hits = distinct
            .iter()
            .filter(|i| hood.items.binary_search(i).is_ok())
            .count();
        total += hits as f64 / distinct.len() as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::Eval(
            "locality score undefined: no user has test positives".into(),
        ));
    }
    Ok(total / counted as f64)
}
