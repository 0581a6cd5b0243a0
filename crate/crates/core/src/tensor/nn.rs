//! Layer-level building blocks composed from tape primitives.

use std::sync::Arc;

use super::{NodeId, ParamId, ParamStore, Tape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

/// Which side of each `(user node, item node)` edge sends messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ItemsToUsers,
    UsersToItems,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregator {
    #[default]
    Sum,
}

impl std::str::FromStr for Aggregator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sum" => Ok(Aggregator::Sum),
            other => Err(format!("unsupported aggregator {other:?} (only \"sum\")")),
        }
    }
}

impl std::fmt::Display for Aggregator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("sum")
    }
}

pub fn embedding_lookup(
    tape: &mut Tape,
    store: &ParamStore,
    table: ParamId,
    indices: &[usize],
) -> Result<NodeId> {
    tape.lookup(store, table, indices)
}

/// `x W + b`, optionally followed by relu.
pub fn affine(
    tape: &mut Tape,
    store: &ParamStore,
    x: NodeId,
    w: ParamId,
    b: ParamId,
    activation: Activation,
) -> Result<NodeId> {
    let wn = tape.param(store, w)?;
    let bn = tape.param(store, b)?;
    let xw = tape.matmul(x, wn)?;
    let out = tape.add_row(xw, bn)?;
    match activation {
        Activation::Relu => tape.relu(out),
        Activation::None => Ok(out),
    }
}

/// One sum-aggregation layer over a bipartite node set:
/// `h'_t = relu((h_t + sum_{s -> t} h_s) W)` for every node `t`, where the
/// messages `s -> t` follow `direction` along `edges`. Nodes with no
/// incoming message only transform their own feature.
///
/// `edges` are `(user node, item node)` pairs of row indices into
/// `node_feats`. Features are rows, so `W` multiplies from the right.
pub fn message_pass_layer(
    tape: &mut Tape,
    store: &ParamStore,
    node_feats: NodeId,
    edges: &[(usize, usize)],
    direction: Direction,
    w: ParamId,
    aggr: Aggregator,
) -> Result<NodeId> {
    let Aggregator::Sum = aggr;
    let n = tape.value(node_feats).rows;
    let mut entries: Vec<(usize, usize, f64)> = (0..n).map(|k| (k, k, 1.0)).collect();
    for &(u, i) in edges {
        if u >= n || i >= n {
            return Err(Error::IndexOutOfRange {
                what: "message-passing nodes",
                index: u.max(i),
                len: n,
            });
        }
        entries.push(match direction {
            Direction::ItemsToUsers => (u, i, 1.0),
            Direction::UsersToItems => (i, u, 1.0),
        });
    }
    let agg = tape.spmm(node_feats, n, Arc::from(entries))?;
    let wn = tape.param(store, w)?;
    let z = tape.matmul(agg, wn)?;
    tape.relu(z)
}
