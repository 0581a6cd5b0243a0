//! Linear propagation baseline: symmetric-normalised neighbor averaging
//! without weights or nonlinearities, layer outputs averaged.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{dot, ScoreVector, Scorer};
use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::tensor::{Matrix, NodeId, ParamId, ParamStore, Tape};

#[derive(Debug, Clone, PartialEq)]
pub struct LightGcnParams {
    pub store: ParamStore,
    pub users: ParamId,
    pub items: ParamId,
    pub layers: usize,
}

impl LightGcnParams {
    pub fn new(num_users: usize, num_items: usize, dim: usize, layers: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("LightGCN needs dim >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (dim as f64).sqrt();
        let mut store = ParamStore::new();
        store.add_uniform("user_emb", vec![num_users, dim], bound, &mut rng)?;
        store.add_uniform("item_emb", vec![num_items, dim], bound, &mut rng)?;
        Self::from_store(store, layers)
    }

    pub fn from_store(store: ParamStore, layers: usize) -> Result<Self> {
        let users = store
            .id_of("user_emb")
            .ok_or_else(|| Error::Checkpoint("missing tensor user_emb".into()))?;
        let items = store
            .id_of("item_emb")
            .ok_or_else(|| Error::Checkpoint("missing tensor item_emb".into()))?;
        Ok(Self {
            store,
            users,
            items,
            layers,
        })
    }
}

/// Entries `(dst, src, coef)` of the normalised adjacency over the stacked
/// node order `[users..., items...]`. Isolated nodes get a unit self-loop so
/// that they keep their own embedding through every layer.
pub(crate) fn normalized_adjacency(graph: &BipartiteGraph) -> Arc<[(usize, usize, f64)]> {
    let nu = graph.num_users();
    let mut entries = Vec::with_capacity(2 * graph.num_edges());
    for (u, i) in graph.edges() {
        let c = 1.0 / ((graph.user_degree(u) * graph.item_degree(i)) as f64).sqrt();
        entries.push((u, nu + i, c));
        entries.push((nu + i, u, c));
    }
    entries.extend((0..nu).filter(|&u| graph.user_degree(u) == 0).map(|u| (u, u, 1.0)));
    entries.extend(
        (0..graph.num_items())
            .filter(|&i| graph.item_degree(i) == 0)
            .map(|i| (nu + i, nu + i, 1.0)),
    );
    Arc::from(entries)
}

/// Propagates `layers` times and returns the per-side mean over layer
/// outputs `0..=layers`.
pub fn lightgcn_propagate(
    graph: &BipartiteGraph,
    user_emb: &Matrix,
    item_emb: &Matrix,
    layers: usize,
) -> Result<(Matrix, Matrix)> {
    let (nu, ni) = (graph.num_users(), graph.num_items());
    if user_emb.rows != nu || item_emb.rows != ni || user_emb.cols != item_emb.cols {
        return Err(Error::Shape(format!(
            "embeddings {}x{} / {}x{} for a {nu} x {ni} graph",
            user_emb.rows, user_emb.cols, item_emb.rows, item_emb.cols
        )));
    }
    let d = user_emb.cols;
    let (mut cur_u, mut cur_i) = (user_emb.clone(), item_emb.clone());
    let (mut sum_u, mut sum_i) = (user_emb.clone(), item_emb.clone());
    for _ in 0..layers {
        let mut next_u = Matrix::zeros(nu, d);
        let mut next_i = Matrix::zeros(ni, d);
        for u in 0..nu {
            let du = graph.user_degree(u);
            if du == 0 {
                next_u.row_mut(u).copy_from_slice(cur_u.row(u));
                continue;
            }
            for &i in graph.items_of(u) {
                let c = 1.0 / ((du * graph.item_degree(i)) as f64).sqrt();
                for k in 0..d {
                    next_u.data[u * d + k] += c * cur_i.data[i * d + k];
                    next_i.data[i * d + k] += c * cur_u.data[u * d + k];
                }
            }
        }
        for i in (0..ni).filter(|&i| graph.item_degree(i) == 0) {
            next_i.row_mut(i).copy_from_slice(cur_i.row(i));
        }
        sum_u.data.iter_mut().zip(&next_u.data).for_each(|(s, v)| *s += v);
        sum_i.data.iter_mut().zip(&next_i.data).for_each(|(s, v)| *s += v);
        cur_u = next_u;
        cur_i = next_i;
    }
    let scale = 1.0 / (layers + 1) as f64;
    sum_u.data.iter_mut().for_each(|v| *v *= scale);
    sum_i.data.iter_mut().for_each(|v| *v *= scale);
    Ok((sum_u, sum_i))
}

/// Tape version used for training: returns the stacked `[users; items]`
/// final embeddings.
pub fn lightgcn_propagate_on_tape(
    tape: &mut Tape,
    params: &LightGcnParams,
    adjacency: &Arc<[(usize, usize, f64)]>,
) -> Result<NodeId> {
    let u = tape.param(&params.store, params.users)?;
    let i = tape.param(&params.store, params.items)?;
    let mut cur = tape.concat_rows(u, i)?;
    let rows = tape.value(cur).rows;
    let mut acc = cur;
    for _ in 0..params.layers {
        cur = tape.spmm(cur, rows, Arc::clone(adjacency))?;
        acc = tape.add(acc, cur)?;
    }
    tape.scale(acc, 1.0 / (params.layers + 1) as f64)
}

/// Scores from propagated embeddings computed once at construction.
pub struct LightGcnScorer {
    users: Matrix,
    items: Matrix,
}

impl LightGcnScorer {
    pub fn new(params: &LightGcnParams, graph: &BipartiteGraph) -> Result<Self> {
        let (users, items) = lightgcn_propagate(
            graph,
            &params.store.get(params.users).to_matrix(),
            &params.store.get(params.items).to_matrix(),
            params.layers,
        )?;
        Ok(Self { users, items })
    }
}

impl Scorer for LightGcnScorer {
    fn num_items(&self) -> usize {
        self.items.rows
    }

    fn score(&self, user: usize) -> Result<ScoreVector> {
        if user >= self.users.rows {
            return Err(Error::IndexOutOfRange {
                what: "users",
                index: user,
                len: self.users.rows,
            });
        }
        let eu = self.users.row(user);
        Ok(ScoreVector {
            user,
            scores: (0..self.items.rows).map(|i| dot(self.items.row(i), eu)).collect(),
            branch_mask: None,
        })
    }
}
