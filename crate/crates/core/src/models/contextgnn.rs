//! The fused ContextGNN head.
//!
//! A user's sampled subgraph runs through `k` sum-aggregation layers. Items
//! inside the subgraph are scored pair-wise against the seed user
//! (`<h_u, h_i> + MLP(h_u)`); every other item falls back to the two-tower
//! score `<h_u, q_i>` against the item matrix `Q`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{dot, Branch, ScoreVector, Scorer};
use crate::error::{Error, Result};
use crate::graph::{sample_subgraph, BipartiteGraph, Fanouts, Node, SampledSubgraph};
use crate::tensor::{
    affine, embedding_lookup, message_pass_layer, Activation, Aggregator, Direction, NodeId, ParamId,
    ParamStore, ParamTensor, Tape,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ContextGnnParams {
    pub store: ParamStore,
    pub user_emb: ParamId,
    pub item_emb: ParamId,
    pub gnn_layers: Vec<ParamId>,
    pub q: ParamId,
    /// `[w1 (d x d), b1 (d), w2 (d x 1), b2 (1)]`
    pub mlp: [ParamId; 4],
    pub aggr: Aggregator,
    dim: usize,
}

const MLP_NAMES: [&str; 4] = ["mlp.0.weight", "mlp.0.bias", "mlp.1.weight", "mlp.1.bias"];

fn layer_name(k: usize) -> String {
    format!("gnn.{k}.weight")
}

impl ContextGnnParams {
    /// Every tensor initialised from `uniform(-1/sqrt(d), 1/sqrt(d))`.
    pub fn new(num_users: usize, num_items: usize, dim: usize, layers: usize, seed: u64) -> Result<Self> {
        if dim == 0 || layers == 0 {
            return Err(Error::Shape(format!(
                "ContextGNN needs dim >= 1 and layers >= 1 (got {dim}, {layers})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (dim as f64).sqrt();
        let mut store = ParamStore::new();
        store.add_uniform("user_emb", vec![num_users, dim], bound, &mut rng)?;
        store.add_uniform("item_emb", vec![num_items, dim], bound, &mut rng)?;
        for k in 0..layers {
            store.add_uniform(&layer_name(k), vec![dim, dim], bound, &mut rng)?;
        }
        store.add_uniform("q", vec![num_items, dim], bound, &mut rng)?;
        store.add_uniform(MLP_NAMES[0], vec![dim, dim], bound, &mut rng)?;
        store.add_uniform(MLP_NAMES[1], vec![dim], bound, &mut rng)?;
        store.add_uniform(MLP_NAMES[2], vec![dim, 1], bound, &mut rng)?;
        store.add_uniform(MLP_NAMES[3], vec![1], bound, &mut rng)?;
        Self::from_store(store)
    }

    /// Re-binds a store (e.g. one loaded from a checkpoint) by tensor name
    /// and checks that all shapes agree on one channel width.
    pub fn from_store(store: ParamStore) -> Result<Self> {
        let id = |name: &str| {
            store
                .id_of(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        let user_emb = id("user_emb")?;
        let item_emb = id("item_emb")?;
        let q = id("q")?;
        let mlp = [id(MLP_NAMES[0])?, id(MLP_NAMES[1])?, id(MLP_NAMES[2])?, id(MLP_NAMES[3])?];
        let mut gnn_layers = Vec::new();
        while let Some(l) = store.id_of(&layer_name(gnn_layers.len())) {
            gnn_layers.push(l);
        }
        let dim = store.get(user_emb).cols();
        let num_items = store.get(item_emb).rows();
        let want = |t: &ParamTensor, shape: &[usize]| {
            if t.shape == shape {
                Ok(())
            } else {
                Err(Error::Shape(format!("{} has shape {:?}, expected {shape:?}", t.name, t.shape)))
            }
        };
        if gnn_layers.is_empty() {
            return Err(Error::Checkpoint("no gnn layers".into()));
        }
        want(store.get(item_emb), &[num_items, dim])?;
        want(store.get(q), &[num_items, dim])?;
        for &l in &gnn_layers {
            want(store.get(l), &[dim, dim])?;
        }
        want(store.get(mlp[0]), &[dim, dim])?;
        want(store.get(mlp[1]), &[dim])?;
        want(store.get(mlp[2]), &[dim, 1])?;
        want(store.get(mlp[3]), &[1])?;
        Ok(Self {
            store,
            user_emb,
            item_emb,
            gnn_layers,
            q,
            mlp,
            aggr: Aggregator::Sum,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_layers(&self) -> usize {
        self.gnn_layers.len()
    }

    pub fn num_users(&self) -> usize {
        self.store.get(self.user_emb).rows()
    }

    pub fn num_items(&self) -> usize {
        self.store.get(self.q).rows()
    }
}

/// Direction of layer `j` out of `layers`: layers alternate and the last
/// one always delivers messages into users, so the seed sees its items.
fn layer_direction(j: usize, layers: usize) -> Direction {
    if (layers - 1 - j) % 2 == 0 {
        Direction::ItemsToUsers
    } else {
        Direction::UsersToItems
    }
}

/// Tape nodes produced by running the GNN over a disjoint union of
/// subgraphs.
pub(crate) struct BatchForward {
    /// Final features of every union node.
    pub h: NodeId,
    /// `MLP(h_seed)`, one row per subgraph.
    pub mlp: NodeId,
    /// Union row of each subgraph's seed.
    pub seed_rows: Vec<usize>,
    /// `union_rows[k][local]` is the union row of local node `local` of
    /// subgraph `k`.
    pub union_rows: Vec<Vec<usize>>,
}

pub(crate) fn forward_batch(
    tape: &mut Tape,
    params: &ContextGnnParams,
    subgraphs: &[SampledSubgraph],
) -> Result<BatchForward> {
    let layers = params.num_layers();
    for sg in subgraphs {
        if sg.hops > layers {
            return Err(Error::Shape(format!(
                "subgraph of depth {} needs at least that many GNN layers (have {layers})",
                sg.hops
            )));
        }
    }
    // users first, then items, across all subgraphs
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    for sg in subgraphs {
        for node in &sg.local_to_global {
            match node {
                Node::User(u) => user_ids.push(*u),
                Node::Item(i) => item_ids.push(*i),
            }
        }
    }
    let n_users = user_ids.len();
    let (mut next_user, mut next_item) = (0usize, n_users);
    let mut union_rows = Vec::with_capacity(subgraphs.len());
    let mut edges = Vec::new();
    for sg in subgraphs {
        let rows: Vec<usize> = sg
            .local_to_global
            .iter()
            .map(|node| match node {
                Node::User(_) => {
                    next_user += 1;
                    next_user - 1
                }
                Node::Item(_) => {
                    next_item += 1;
                    next_item - 1
                }
            })
            .collect();
        edges.extend(sg.local_edges.iter().map(|&(u, i)| (rows[u], rows[i])));
        union_rows.push(rows);
    }
    let seed_rows: Vec<usize> = union_rows.iter().map(|r| r[0]).collect();

    let store = &params.store;
    let users = embedding_lookup(tape, store, params.user_emb, &user_ids)?;
    let items = embedding_lookup(tape, store, params.item_emb, &item_ids)?;
    let mut h = tape.concat_rows(users, items)?;
    for (j, &w) in params.gnn_layers.iter().enumerate() {
        h = message_pass_layer(tape, store, h, &edges, layer_direction(j, layers), w, params.aggr)?;
    }
    let seeds = tape.gather(h, &seed_rows)?;
    let hidden = affine(tape, store, seeds, params.mlp[0], params.mlp[1], Activation::Relu)?;
    let mlp = affine(tape, store, hidden, params.mlp[2], params.mlp[3], Activation::None)?;
    Ok(BatchForward {
        h,
        mlp,
        seed_rows,
        union_rows,
    })
}

/// Fused scores for `(subgraph index, item)` requests as an `n x 1` tape
/// node, in request order. Items inside the subgraph take the pair branch,
/// all others the tower branch.
pub fn score_pairs(
    tape: &mut Tape,
    params: &ContextGnnParams,
    subgraphs: &[SampledSubgraph],
    requests: &[(usize, usize)],
) -> Result<NodeId> {
    let fwd = forward_batch(tape, params, subgraphs)?;
    let (mut pair_seed, mut pair_item, mut pair_sg) = (Vec::new(), Vec::new(), Vec::new());
    let (mut tower_seed, mut tower_item) = (Vec::new(), Vec::new());
    let mut slot = Vec::with_capacity(requests.len());
    for &(k, item) in requests {
        let sg = subgraphs.get(k).ok_or(Error::IndexOutOfRange {
            what: "subgraphs",
            index: k,
            len: subgraphs.len(),
        })?;
        match sg.local_of(Node::Item(item)) {
            Some(local) => {
                slot.push((Branch::Pair, pair_seed.len()));
                pair_seed.push(fwd.seed_rows[k]);
                pair_item.push(fwd.union_rows[k][local]);
                pair_sg.push(k);
            }
            None => {
                slot.push((Branch::Tower, tower_seed.len()));
                tower_seed.push(fwd.seed_rows[k]);
                tower_item.push(item);
            }
        }
    }
    let hu = tape.gather(fwd.h, &pair_seed)?;
    let hi = tape.gather(fwd.h, &pair_item)?;
    let pd = tape.row_dot(hu, hi)?;
    let offset = tape.gather(fwd.mlp, &pair_sg)?;
    let pair = tape.add(pd, offset)?;

    let tu = tape.gather(fwd.h, &tower_seed)?;
    let qi = embedding_lookup(tape, &params.store, params.q, &tower_item)?;
    let tower = tape.row_dot(tu, qi)?;

    let both = tape.concat_rows(pair, tower)?;
    let n_pair = pair_seed.len();
    let order: Vec<usize> = slot
        .into_iter()
        .map(|(b, k)| if b == Branch::Pair { k } else { n_pair + k })
        .collect();
    tape.gather(both, &order)
}

/// Seed-user and contained-item representations after the GNN.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnOutput {
    pub h_u: Vec<f64>,
    /// `(global item index, final vector)` for every contained item, in
    /// ascending item order.
    pub h_items: Vec<(usize, Vec<f64>)>,
    /// The fusion MLP's scalar offset for this user.
    pub mlp_offset: f64,
}

pub fn gnn_forward(subgraph: &SampledSubgraph, params: &ContextGnnParams) -> Result<GnnOutput> {
    let mut tape = Tape::new();
    let fwd = forward_batch(&mut tape, params, std::slice::from_ref(subgraph))?;
    let h = tape.value(fwd.h);
    let h_items = subgraph
        .contained_items
        .iter()
        .map(|&i| {
            let local = subgraph.global_to_local[&Node::Item(i)];
            (i, h.row(fwd.union_rows[0][local]).to_vec())
        })
        .collect();
    Ok(GnnOutput {
        h_u: h.row(fwd.seed_rows[0]).to_vec(),
        h_items,
        mlp_offset: tape.value(fwd.mlp).data[0],
    })
}

pub fn pair_score(h_u: &[f64], h_items: &[Vec<f64>]) -> Result<Vec<f64>> {
    h_items
        .iter()
        .map(|hi| {
            if hi.len() != h_u.len() {
                Err(Error::Shape(format!("item vector of {} vs user vector of {}", hi.len(), h_u.len())))
            } else {
                Ok(dot(h_u, hi))
            }
        })
        .collect()
}

/// `Q h_u`: the two-tower score of every item.
pub fn tower_score(h_u: &[f64], q: &ParamTensor) -> Result<Vec<f64>> {
    if q.cols() != h_u.len() {
        return Err(Error::Shape(format!("Q has {} columns, user vector {}", q.cols(), h_u.len())));
    }
    Ok((0..q.rows()).map(|i| dot(q.row(i), h_u)).collect())
}

/// How the pair/tower routing decides membership in the user's
/// neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Routing {
    /// Route on the items contained in the fanout-sampled subgraph.
    #[default]
    Sampled,
    /// Route on the exact k-hop neighborhood (unlimited fanout).
    Exact,
}

/// Full fused score vector of `user`.
pub fn fused_scores(
    user: usize,
    graph: &BipartiteGraph,
    params: &ContextGnnParams,
    fanouts: &Fanouts,
    rng_seed: u64,
    routing: Routing,
) -> Result<ScoreVector> {
    let fanouts = match routing {
        Routing::Sampled => fanouts.clone(),
        Routing::Exact => Fanouts::unlimited(fanouts.hops()),
    };
    let sg = sample_subgraph(graph, user, &fanouts, rng_seed);
    let out = gnn_forward(&sg, params)?;
    let mut scores = tower_score(&out.h_u, params.store.get(params.q))?;
    let mut mask = vec![Branch::Tower; scores.len()];
    for (i, hi) in &out.h_items {
        scores[*i] = dot(&out.h_u, hi) + out.mlp_offset;
        mask[*i] = Branch::Pair;
    }
    Ok(ScoreVector {
        user,
        scores,
        branch_mask: Some(mask),
    })
}

pub struct ContextGnnScorer<'a> {
    pub params: &'a ContextGnnParams,
    pub graph: &'a BipartiteGraph,
    pub fanouts: Fanouts,
    pub seed: u64,
    pub routing: Routing,
}

impl Scorer for ContextGnnScorer<'_> {
    fn num_items(&self) -> usize {
        self.params.num_items()
    }

    fn score(&self, user: usize) -> Result<ScoreVector> {
        fused_scores(user, self.graph, self.params, &self.fanouts, self.seed, self.routing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero(params: &mut ContextGnnParams, ids: &[ParamId]) {
        for &id in ids {
            params.store.get_mut(id).values.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn toy_graph() -> BipartiteGraph {
        BipartiteGraph::from_edges(3, 4, &[(0, 0), (0, 1), (1, 1), (1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn zero_layers_give_zero_user_vector() {
        let g = toy_graph();
        let mut p = ContextGnnParams::new(3, 4, 4, 2, 1).unwrap();
        let layers = p.gnn_layers.clone();
        zero(&mut p, &layers);
        let sg = sample_subgraph(&g, 0, &Fanouts::unlimited(2), 0);
        let out = gnn_forward(&sg, &p).unwrap();
        assert_eq!(out.h_u, vec![0.0; 4]);
    }

    #[test]
    fn seed_only_identity_layer_is_relu_of_embedding() {
        let g = BipartiteGraph::from_edges(2, 2, &[(0, 0)]).unwrap();
        let mut p = ContextGnnParams::new(2, 2, 3, 1, 5).unwrap();
        let w = p.gnn_layers[0];
        p.store.get_mut(w).values = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let sg = sample_subgraph(&g, 1, &Fanouts::unlimited(1), 0);
        let out = gnn_forward(&sg, &p).unwrap();
        let e: Vec<f64> = p.store.get(p.user_emb).row(1).iter().map(|v| v.max(0.0)).collect();
        assert_eq!(out.h_u, e);
        assert!(out.h_items.is_empty());
    }

    #[test]
    fn depth_beyond_layers_is_rejected() {
        let g = toy_graph();
        let p = ContextGnnParams::new(3, 4, 2, 1, 0).unwrap();
        let sg = sample_subgraph(&g, 0, &Fanouts::unlimited(3), 0);
        assert!(gnn_forward(&sg, &p).is_err());
    }

    #[test]
    fn unit_and_orthogonal_pair_scores() {
        assert_eq!(pair_score(&[1.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), vec![1.0, 0.0]);
        assert!(pair_score(&[1.0], &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn tower_identity_and_zero() {
        let q = ParamTensor::new("q", vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(tower_score(&[0.5, -1.0, 2.0], &q).unwrap(), vec![0.5, -1.0, 2.0]);
        assert_eq!(tower_score(&[0.0; 3], &q).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn zero_mlp_leaves_raw_pair_scores() {
        let g = toy_graph();
        let mut p = ContextGnnParams::new(3, 4, 4, 3, 2).unwrap();
        let mlp = p.mlp;
        zero(&mut p, &mlp);
        let f = Fanouts::unlimited(3);
        let sv = fused_scores(0, &g, &p, &f, 9, Routing::Sampled).unwrap();
        let out = gnn_forward(&sample_subgraph(&g, 0, &f, 9), &p).unwrap();
        for (i, hi) in &out.h_items {
            assert_eq!(sv.scores[*i], dot(&out.h_u, hi));
        }
    }

    #[test]
    fn isolated_user_routes_everything_to_tower() {
        let g = BipartiteGraph::from_edges(3, 4, &[(0, 0)]).unwrap();
        let p = ContextGnnParams::new(3, 4, 4, 2, 3).unwrap();
        let sv = fused_scores(2, &g, &p, &Fanouts::new(vec![4, 4]).unwrap(), 0, Routing::Sampled).unwrap();
        assert!(sv.branch_mask.unwrap().iter().all(|b| *b == Branch::Tower));
    }

    #[test]
    fn score_pairs_agrees_with_fused_scores() {
        let g = toy_graph();
        let p = ContextGnnParams::new(3, 4, 5, 3, 8).unwrap();
        let f = Fanouts::unlimited(3);
        let sgs: Vec<_> = (0..3).map(|u| sample_subgraph(&g, u, &f, 4)).collect();
        let requests: Vec<(usize, usize)> = (0..3).flat_map(|k| (0..4).map(move |i| (k, i))).collect();
        let mut tape = Tape::new();
        let s = score_pairs(&mut tape, &p, &sgs, &requests).unwrap();
        let batched = tape.value(s).data.clone();
        for u in 0..3 {
            let sv = fused_scores(u, &g, &p, &f, 4, Routing::Sampled).unwrap();
            for i in 0..4 {
                assert!((batched[u * 4 + i] - sv.scores[i]).abs() < 1e-12);
            }
        }
    }
}
