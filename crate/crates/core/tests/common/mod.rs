//! Independent reference implementations used by the integration tests and
//! the acceptance harness. Nothing here calls into the code under test
//! except for plain data types.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use gravel_core::models::{ContextGnnParams, ScoreVector, Scorer};
use gravel_core::Result;
use rand::Rng;

pub type Edges = Vec<(usize, usize)>;

/// Random bipartite edge set; each pair kept with probability `p`.
pub fn random_edges<R: Rng>(rng: &mut R, nu: usize, ni: usize, p: f64) -> Edges {
    let mut e = Vec::new();
    for u in 0..nu {
        for i in 0..ni {
            if rng.gen_bool(p) {
                e.push((u, i));
            }
        }
    }
    e
}

/// Reachability by repeated boolean matrix-vector products on the dense
/// `(nu + ni)` square adjacency: `r_{t+1} = r_t OR A r_t`. Returns
/// `(users, items)` reached within `k` steps, seed excluded, both sorted.
pub fn khop_oracle(nu: usize, ni: usize, edges: &[(usize, usize)], seed: usize, k: usize) -> (Vec<usize>, Vec<usize>) {
    let n = nu + ni;
    let mut a = vec![vec![false; n]; n];
    for &(u, i) in edges {
        a[u][nu + i] = true;
        a[nu + i][u] = true;
    }
    let mut r = vec![false; n];
    r[seed] = true;
    for _ in 0..k {
        let mut next = r.clone();
        for (row, hit) in a.iter().zip(next.iter_mut()) {
            if !*hit {
                *hit = row.iter().zip(&r).any(|(x, y)| *x && *y);
            }
        }
        r = next;
    }
    let users = (0..nu).filter(|&u| u != seed && r[u]).collect();
    let items = (0..ni).filter(|&i| r[nu + i]).collect();
    (users, items)
}

/// Mean over users with positives of the share of distinct positives in the
/// k-hop item set. Users are visited in ascending order so the float sum
/// matches a straightforward accumulation.
pub fn locality_oracle(nu: usize, ni: usize, edges: &[(usize, usize)], positives: &[Vec<usize>], k: usize) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (u, pos) in positives.iter().enumerate() {
        let distinct: BTreeSet<usize> = pos.iter().copied().collect();
        if distinct.is_empty() {
            continue;
        }
        let (_, items) = khop_oracle(nu, ni, edges, u, k);
        let hits = distinct.iter().filter(|i| items.contains(i)).count();
        total += hits as f64 / distinct.len() as f64;
        n += 1;
    }
    (n > 0).then(|| total / n as f64)
}

/// Unmasked items fully sorted by score descending, then index ascending,
/// truncated to `k`.
pub fn brute_topk(scores: &[f64], masked: &[usize], k: usize) -> Vec<usize> {
    let mut items: Vec<usize> = (0..scores.len()).filter(|i| !masked.contains(i)).collect();
    items.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    items.truncate(k);
    items
}

pub fn brute_recall(top: &[usize], positives: &[usize]) -> f64 {
    let hits = top.iter().filter(|i| positives.contains(i)).count();
    hits as f64 / positives.len() as f64
}

pub fn brute_ndcg(top: &[usize], positives: &[usize], k: usize) -> f64 {
    let mut dcg = 0.0;
    for (pos, item) in top.iter().enumerate() {
        if positives.contains(item) {
            dcg += 1.0 / (pos as f64 + 2.0).log2();
        }
    }
    let mut idcg = 0.0;
    for pos in 0..k.min(positives.len()) {
        idcg += 1.0 / (pos as f64 + 2.0).log2();
    }
    dcg / idcg
}

/// `(recall, ndcg)` averaged over users with at least one positive.
pub fn brute_metrics(scores: &[Vec<f64>], train: &[Vec<usize>], test: &[Vec<usize>], k: usize) -> (f64, f64) {
    let (mut r, mut g, mut n) = (0.0, 0.0, 0.0);
    for u in 0..scores.len() {
        if test[u].is_empty() {
            continue;
        }
        let top = brute_topk(&scores[u], &train[u], k);
        r += brute_recall(&top, &test[u]);
        g += brute_ndcg(&top, &test[u], k);
        n += 1.0;
    }
    (r / n, g / n)
}

/// Fixed score table behind the `Scorer` interface.
pub struct MatrixScorer(pub Vec<Vec<f64>>);

impl Scorer for MatrixScorer {
    fn num_items(&self) -> usize {
        self.0.first().map_or(0, Vec::len)
    }

    fn score(&self, user: usize) -> Result<ScoreVector> {
        Ok(ScoreVector {
            user,
            scores: self.0[user].clone(),
            branch_mask: None,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum N {
    U(usize),
    I(usize),
}

fn row(p: &ContextGnnParams, id: gravel_core::tensor::ParamId, r: usize) -> Vec<f64> {
    p.store.get(id).row(r).to_vec()
}

fn vec_mat(x: &[f64], w: &[f64], cols: usize) -> Vec<f64> {
    (0..cols).map(|c| x.iter().enumerate().map(|(r, v)| v * w[r * cols + c]).sum()).collect()
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fused score vector of `user` computed with plain loops over the exact
/// `layers`-hop neighborhood: every node updates as
/// `relu((h + sum of incoming) W_j)`, the last layer sends items to users
/// and directions alternate going backwards. Pair scores for reached
/// items, `<h_u, q_i>` for the rest. Returns the scores and the reached
/// item set.
pub fn naive_fused(
    nu: usize,
    ni: usize,
    edges: &[(usize, usize)],
    params: &ContextGnnParams,
    user: usize,
) -> (Vec<f64>, Vec<usize>) {
    let layers = params.gnn_layers.len();
    let d = params.dim();
    let (users, items) = khop_oracle(nu, ni, edges, user, layers);
    let mut nodes = vec![N::U(user)];
    nodes.extend(users.iter().map(|&u| N::U(u)));
    nodes.extend(items.iter().map(|&i| N::I(i)));
    let inside: Vec<(usize, usize)> = edges
        .iter()
        .copied()
        .filter(|&(u, i)| (u == user || users.contains(&u)) && items.contains(&i))
        .collect();
    let mut h: HashMap<N, Vec<f64>> = nodes
        .iter()
        .map(|&n| {
            let v = match n {
                N::U(u) => row(params, params.user_emb, u),
                N::I(i) => row(params, params.item_emb, i),
            };
            (n, v)
        })
        .collect();
    for j in 0..layers {
        let items_to_users = (layers - 1 - j) % 2 == 0;
        let w = &params.store.get(params.gnn_layers[j]).values;
        let mut next = HashMap::new();
        for &n in &nodes {
            let mut agg = h[&n].clone();
            for &(u, i) in &inside {
                let src = match (n, items_to_users) {
                    (N::U(x), true) if x == u => Some(N::I(i)),
                    (N::I(x), false) if x == i => Some(N::U(u)),
                    _ => None,
                };
                if let Some(s) = src {
                    for (a, b) in agg.iter_mut().zip(&h[&s]) {
                        *a += b;
                    }
                }
            }
            let out: Vec<f64> = vec_mat(&agg, w, d).into_iter().map(|v| v.max(0.0)).collect();
            next.insert(n, out);
        }
        h = next;
    }
    let hu = h[&N::U(user)].clone();
    let w0 = &params.store.get(params.mlp[0]).values;
    let b0 = &params.store.get(params.mlp[1]).values;
    let w1 = &params.store.get(params.mlp[2]).values;
    let b1 = params.store.get(params.mlp[3]).values[0];
    let hidden: Vec<f64> = vec_mat(&hu, w0, d).iter().zip(b0).map(|(v, b)| (v + b).max(0.0)).collect();
    let offset = vec_mat(&hidden, w1, 1)[0] + b1;
    let scores = (0..ni)
        .map(|i| {
            if items.contains(&i) {
                dotp(&hu, &h[&N::I(i)]) + offset
            } else {
                dotp(&hu, &row(params, params.q, i))
            }
        })
        .collect();
    (scores, items)
}

/// Relative difference with an absolute floor of 1.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Writes `<root>/data/<name>/{train,test}_elliot.tsv` (plus the other
/// benchmark files) for a synthetic dataset and returns it.
pub fn synthetic_bench(
    root: &std::path::Path,
    name: &str,
    cfg: &gravel_core::data::SynthConfig,
) -> gravel_core::InteractionDataset {
    let ds = gravel_core::data::generate_synthetic(cfg).unwrap();
    gravel_core::data::convert_for_benchmark(&ds, &root.join("data").join(name)).unwrap();
    ds
}

/// Experiment header pointing at [`synthetic_bench`] output; append a
/// `models:` block.
pub fn config_head(dataset: &str) -> String {
    format!(
        "experiment:\n  backend: pytorch\n  data_config:\n    strategy: fixed\n    train_path: data/{{0}}/train_elliot.tsv\n    test_path: data/{{0}}/test_elliot.tsv\n  dataset: {dataset}\n  top_k: 20\n"
    )
}

/// Every file below `dir`, relative and sorted.
pub fn list_files(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    fn walk(base: &std::path::Path, d: &std::path::Path, out: &mut Vec<std::path::PathBuf>) {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.push(p.strip_prefix(base).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    if dir.exists() {
        walk(dir, dir, &mut out);
    }
    out.sort();
    out
}
