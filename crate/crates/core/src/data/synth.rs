//! Planted-block synthetic interactions.

use rand::seq::index;
use rand::Rng as _;

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub blocks: usize,
    pub in_density: f64,
    pub cross_density: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Block of entity `k` out of `n`, contiguous and as even as possible.
    pub fn block_of(&self, k: usize, n: usize) -> usize {
        k * self.blocks / n
    }
}

/// Draws every `(u, i)` pair independently with `in_density` inside a
/// block and `cross_density` across blocks, then moves
/// `ceil(test_fraction * degree)` of each user's edges to test, capped so at
/// least one train edge remains.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<InteractionDataset> {
    for (name, p) in [
        ("in_density", cfg.in_density),
        ("cross_density", cfg.cross_density),
        ("test_fraction", cfg.test_fraction),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Dataset(format!("{name} must lie in [0, 1], got {p}")));
        }
    }
    if cfg.users == 0 || cfg.items == 0 {
        return Err(Error::Dataset("synthetic dataset needs at least one user and item".into()));
    }
    if cfg.blocks == 0 || cfg.blocks > cfg.users.min(cfg.items) {
        return Err(Error::Dataset(format!(
            "blocks must be in 1..={}, got {}",
            cfg.users.min(cfg.items),
            cfg.blocks
        )));
    }
    let mut rng = rng_for(cfg.seed, &[0]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for u in 0..cfg.users {
        let bu = cfg.block_of(u, cfg.users);
        let items: Vec<usize> = (0..cfg.items)
            .filter(|&i| {
                let p = if cfg.block_of(i, cfg.items) == bu {
                    cfg.in_density
                } else {
                    cfg.cross_density
                };
                rng.gen_bool(p)
            })
            .collect();
        let deg = items.len();
        let n_test = ((cfg.test_fraction * deg as f64).ceil() as usize).min(deg.saturating_sub(1));
        let mut split_rng = rng_for(cfg.seed, &[1, u as u64]);
        let mut is_test = vec![false; deg];
        for k in index::sample(&mut split_rng, deg, n_test) {
            is_test[k] = true;
        }
        for (k, i) in items.into_iter().enumerate() {
            if is_test[k] { &mut test } else { &mut train }.push((u, i));
        }
    }
    InteractionDataset::from_indices(cfg.users, cfg.items, train, test)
}
