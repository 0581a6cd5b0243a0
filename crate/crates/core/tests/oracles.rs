mod common;

use common::*;
use gravel_core::eval::{evaluate, ndcg_at_k, rank_topk, recall_at_k};
use gravel_core::graph::{khop_neighborhood, locality_score, sample_subgraph};
use gravel_core::models::{fused_scores, gnn_forward, pair_score, tower_score, Branch, ContextGnnParams, Routing, ScoreVector};
use gravel_core::training::bpr_loss;
use gravel_core::{BipartiteGraph, Fanouts, InteractionDataset, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn graph(nu: usize, ni: usize, e: &[(usize, usize)]) -> BipartiteGraph {
    BipartiteGraph::from_edges(nu, ni, e).unwrap()
}

#[test]
fn khop_matches_matrix_power_reachability() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let (nu, ni) = (rng.gen_range(1..12), rng.gen_range(1..12));
        let e = random_edges(&mut rng, nu, ni, 0.2);
        let g = graph(nu, ni, &e);
        for u in 0..nu {
            for k in 0..5 {
                let hood = khop_neighborhood(&g, u, k);
                let (users, items) = khop_oracle(nu, ni, &e, u, k);
                assert_eq!((hood.users, hood.items.clone()), (users, items.clone()), "user {u} k {k}");
                if k > 0 {
                    let sg = sample_subgraph(&g, u, &Fanouts::unlimited(k), 3);
                    assert_eq!(sg.contained_items, items);
                }
            }
        }
    }
}

#[test]
fn sampled_subgraphs_stay_inside_the_exact_neighborhood() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..30 {
        let (nu, ni) = (rng.gen_range(2..15), rng.gen_range(2..15));
        let e = random_edges(&mut rng, nu, ni, 0.3);
        let g = graph(nu, ni, &e);
        let caps = vec![rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..4)];
        let f = Fanouts::new(caps.clone()).unwrap();
        for u in 0..nu {
            let sg = sample_subgraph(&g, u, &f, rng.gen());
            let (_, items) = khop_oracle(nu, ni, &e, u, 3);
            assert!(sg.contained_items.iter().all(|i| items.contains(i)));
            for &(lu, li) in &sg.local_edges {
                let (a, b) = (sg.local_to_global[lu], sg.local_to_global[li]);
                match (a, b) {
                    (gravel_core::Node::User(x), gravel_core::Node::Item(y)) => assert!(e.contains(&(x, y))),
                    other => panic!("edge {other:?} is not user-item"),
                }
            }
            // the seed expands into at most caps[0] items
            assert!(sg.nodes_per_hop[1].len() <= caps[0]);
        }
    }
}

#[test]
fn locality_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..40 {
        let (nu, ni) = (rng.gen_range(1..10), rng.gen_range(1..10));
        let e = random_edges(&mut rng, nu, ni, 0.25);
        let g = graph(nu, ni, &e);
        let pos: Vec<Vec<usize>> = (0..nu)
            .map(|_| (0..ni).filter(|_| rng.gen_bool(0.3)).collect())
            .collect();
        for k in 1..=3 {
            let want = locality_oracle(nu, ni, &e, &pos, k);
            match want {
                Some(v) => assert_eq!(locality_score(&g, &pos, k).unwrap(), v),
                None => assert!(locality_score(&g, &pos, k).is_err()),
            }
        }
    }
}

#[test]
fn rank_topk_matches_full_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let n = rng.gen_range(1..40);
        // coarse values force ties
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64 * 0.5).collect();
        let masked: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.2)).collect();
        let k = rng.gen_range(0..n + 3);
        let sv = ScoreVector {
            user: 0,
            scores: scores.clone(),
            branch_mask: None,
        };
        assert_eq!(rank_topk(&sv, &masked, k).topk_items, brute_topk(&scores, &masked, k));
    }
}

#[test]
fn ranking_is_invariant_under_increasing_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let n = rng.gen_range(2..30);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mapped: Vec<f64> = scores.iter().map(|s| 2.0 * s.exp() + 1.0).collect();
        let sv = |s: Vec<f64>| ScoreVector {
            user: 0,
            scores: s,
            branch_mask: None,
        };
        let k = rng.gen_range(1..n);
        assert_eq!(rank_topk(&sv(scores), &[], k).topk_items, rank_topk(&sv(mapped), &[], k).topk_items);
    }
}

#[test]
fn hand_value() {
    // positives {0, 2}; ranking [0, 1, 2]
    let sv = ScoreVector {
        user: 0,
        scores: vec![3.0, 2.0, 1.0, 0.0],
        branch_mask: None,
    };
    let r = rank_topk(&sv, &[], 3);
    assert_eq!(r.topk_items, vec![0, 1, 2]);
    assert_eq!(recall_at_k(&r, &[0, 2]), 1.0);
    let want = (1.0 + 0.5) / (1.0 + 1.0 / 3f64.log2());
    assert!((ndcg_at_k(&r, &[0, 2]) - want).abs() < 1e-15);
    assert!((want - 0.91972).abs() < 1e-5);
}

#[test]
fn evaluate_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..200 {
        let (nu, ni) = (5, 8);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for u in 0..nu {
            for i in 0..ni {
                match rng.gen_range(0..4) {
                    0 => train.push((u, i)),
                    1 => test.push((u, i)),
                    _ => {}
                }
            }
        }
        if test.is_empty() {
            continue;
        }
        let d = InteractionDataset::from_indices(nu, ni, train, test).unwrap();
        let scores: Vec<Vec<f64>> = (0..nu).map(|_| (0..ni).map(|_| rng.gen_range(0..5) as f64).collect()).collect();
        for k in 1..=ni {
            let rep = evaluate(&MatrixScorer(scores.clone()), &d, k, Split::Test).unwrap();
            let (r, g) = brute_metrics(&scores, &d.items_by_user(Split::Train), &d.items_by_user(Split::Test), k);
            assert!((rep.recall - r).abs() < 1e-12 && (rep.ndcg - g).abs() < 1e-12);
        }
    }
}

#[test]
fn random_scores_recall_is_k_over_items() {
    // 5 users, one positive each, nothing masked: E[recall] = K / |I|
    let (nu, ni, k) = (5, 300, 20);
    let test: Vec<(usize, usize)> = (0..nu).map(|u| (u, u * 7)).collect();
    let d = InteractionDataset::from_indices(nu, ni, vec![], test).unwrap();
    let trials = 10_000;
    let mut sum = 0.0;
    for s in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let scores: Vec<Vec<f64>> = (0..nu).map(|_| (0..ni).map(|_| rng.gen()).collect()).collect();
        sum += evaluate(&MatrixScorer(scores), &d, k, Split::Test).unwrap().recall;
    }
    let mean = sum / trials as f64;
    let p = k as f64 / ni as f64;
    // per-trial mean of 5 Bernoulli(p): sd sqrt(p(1-p)/5), then over trials
    let sd = (p * (1.0 - p) / nu as f64 / trials as f64).sqrt();
    assert!((mean - p).abs() < 4.0 * sd, "mean {mean} vs {p}");
}

// 50-digit reference values of mean softplus(neg - pos)
const BPR_BATCHES: [([f64; 16], [f64; 16], f64); 4] = [
    (
        [12.94921875, 13.80078125, 12.9140625, -3.84765625, -4.18359375, 14.4453125, -4.0859375, -9.9765625, 12.578125, 3.4140625, -6.92578125, -10.19921875, -13.3203125, 9.3515625, 12.98828125, -5.921875],
        [-15.04296875, -11.9609375, -12.19140625, -13.71875, -3.828125, -0.51953125, -14.078125, 13.69140625, 4.87890625, 12.19140625, -3.5, -1.046875, 2.82421875, 15.984375, -15.70703125, -10.5625],
        4.29569457864038381400647580455,
    ),
    (
        [13.265625, 1.80078125, 10.03125, -10.67578125, 0.25390625, 4.17578125, -1.3046875, 2.49609375, -14.09765625, -11.5078125, -9.09375, 9.625, -9.1015625, 2.6171875, 8.734375, -11.7265625],
        [-14.921875, -15.96875, -2.3359375, -2.578125, -12.65234375, 14.078125, 8.02734375, 9.43359375, 10.86328125, -11.328125, -3.296875, 1.265625, 5.55859375, -10.42578125, 3.9140625, 5.28515625],
        6.09368507145803687256889967794,
    ),
    (
        [-15.03125, 10.2421875, -8.44921875, -7.38671875, -0.234375, -9.53515625, -15.30078125, -12.16796875, 13.75390625, 15.15625, -4.62890625, -3.9453125, 12.6328125, -3.796875, -7.62109375, 10.828125],
        [8.55859375, -8.546875, 9.26953125, 10.92578125, -2.37890625, -15.97265625, 1.265625, 3.46484375, -14.74609375, -2.515625, -4.015625, 9.23046875, -9.58203125, -13.30859375, -6.63671875, -2.35546875],
        6.71602960360980421457441811364,
    ),
    (
        [12.2578125, 0.52734375, -15.390625, 5.05078125, 2.9609375, 8.71484375, -11.3046875, -11.24609375, -10.234375, -2.64453125, -0.44921875, -15.0078125, 7.59375, 7.78515625, 13.00390625, -7.859375],
        [14.95703125, -7.31640625, 8.70703125, -4.30078125, -6.13671875, 3.890625, -1.38671875, -0.03515625, -3.85546875, -5.859375, -3.421875, 8.84375, 14.87890625, -10.9765625, 10.97265625, -12.96875],
        5.35850544589958652501023918134,
    ),
];

#[test]
fn bpr_loss_matches_high_precision_values() {
    for (pos, neg, want) in BPR_BATCHES {
        let got = bpr_loss(&pos, &neg).unwrap();
        assert!((got - want).abs() / want < 1e-12, "{got} vs {want}");
    }
    // single pairs: x = pos - neg
    for (x, want) in [
        (-40.0, 40.0000000000000000042483542553),
        (-0.5, 0.974076984180106680872997355081),
        (30.0, 9.35762296883973677937769742468e-14),
        (700.0, 9.85967654375977085670537294785e-305),
    ] {
        let got = bpr_loss(&[x], &[0.0]).unwrap();
        assert!((got - want).abs() / want < 1e-12, "x={x}: {got} vs {want}");
    }
}

fn fixture() -> (usize, usize, Vec<(usize, usize)>) {
    // two users sharing item 1, a third on its own, one isolated item
    (3, 4, vec![(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)])
}

#[test]
fn gnn_forward_matches_hand_unrolled_loops() {
    let (nu, ni, e) = fixture();
    let g = graph(nu, ni, &e);
    for layers in 1..=3 {
        let p = ContextGnnParams::new(nu, ni, 3, layers, 40 + layers as u64).unwrap();
        for u in 0..nu {
            let (want, items) = naive_fused(nu, ni, &e, &p, u);
            let sv = fused_scores(u, &g, &p, &Fanouts::unlimited(layers), 0, Routing::Exact).unwrap();
            for i in 0..ni {
                assert!(rel_diff(sv.scores[i], want[i]) < 1e-12, "L{layers} u{u} i{i}");
                let pair = sv.branch_mask.as_ref().unwrap()[i] == Branch::Pair;
                assert_eq!(pair, items.contains(&i));
            }
        }
    }
}

#[test]
fn pair_and_tower_scores_match_loops() {
    let (nu, ni, e) = fixture();
    let g = graph(nu, ni, &e);
    let p = ContextGnnParams::new(nu, ni, 4, 2, 9).unwrap();
    let sg = sample_subgraph(&g, 1, &Fanouts::unlimited(2), 0);
    let out = gnn_forward(&sg, &p).unwrap();
    let vecs: Vec<Vec<f64>> = out.h_items.iter().map(|(_, v)| v.clone()).collect();
    let pairs = pair_score(&out.h_u, &vecs).unwrap();
    for (s, v) in pairs.iter().zip(&vecs) {
        let mut want = 0.0;
        for c in 0..4 {
            want += out.h_u[c] * v[c];
        }
        assert!(rel_diff(*s, want) < 1e-14);
    }
    let q = p.store.get(p.q);
    let tower = tower_score(&out.h_u, q).unwrap();
    for i in 0..ni {
        let mut want = 0.0;
        for c in 0..4 {
            want += q.values[i * 4 + c] * out.h_u[c];
        }
        assert!(rel_diff(tower[i], want) < 1e-14);
    }
}
