use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{dot, ScoreVector, Scorer};
use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore};

/// Plain matrix factorisation trained with BPR.
#[derive(Debug, Clone, PartialEq)]
pub struct MfParams {
    pub store: ParamStore,
    pub users: ParamId,
    pub items: ParamId,
}

impl MfParams {
    pub fn new(num_users: usize, num_items: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("MF needs dim >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (dim as f64).sqrt();
        let mut store = ParamStore::new();
        store.add_uniform("user_factors", vec![num_users, dim], bound, &mut rng)?;
        store.add_uniform("item_factors", vec![num_items, dim], bound, &mut rng)?;
        Self::from_store(store)
    }

    pub fn from_store(store: ParamStore) -> Result<Self> {
        let users = store
            .id_of("user_factors")
            .ok_or_else(|| Error::Checkpoint("missing tensor user_factors".into()))?;
        let items = store
            .id_of("item_factors")
            .ok_or_else(|| Error::Checkpoint("missing tensor item_factors".into()))?;
        if store.get(users).cols() != store.get(items).cols() {
            return Err(Error::Shape("user and item factors differ in width".into()));
        }
        Ok(Self { store, users, items })
    }
}

/// `Q p_u` for every item.
pub fn mf_bpr_score(user: usize, params: &MfParams) -> Result<Vec<f64>> {
    let p = params.store.get(params.users);
    if user >= p.rows() {
        return Err(Error::IndexOutOfRange {
            what: "users",
            index: user,
            len: p.rows(),
        });
    }
    let pu = p.row(user);
    let q = params.store.get(params.items);
    Ok((0..q.rows()).map(|i| dot(q.row(i), pu)).collect())
}

pub struct MfScorer<'a>(pub &'a MfParams);

impl Scorer for MfScorer<'_> {
    fn num_items(&self) -> usize {
        self.0.store.get(self.0.items).rows()
    }

    fn score(&self, user: usize) -> Result<ScoreVector> {
        Ok(ScoreVector {
            user,
            scores: mf_bpr_score(user, self.0)?,
            branch_mask: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_items_return_user_vector() {
        let mut p = MfParams::new(2, 3, 3, 0).unwrap();
        let items = p.items;
        p.store.get_mut(items).values = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let pu = p.store.get(p.users).row(1).to_vec();
        assert_eq!(mf_bpr_score(1, &p).unwrap(), pu);
    }

    #[test]
    fn zero_user_gives_zero_scores() {
        let mut p = MfParams::new(2, 4, 3, 0).unwrap();
        let users = p.users;
        p.store.get_mut(users).values[..3].iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(mf_bpr_score(0, &p).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn random_case_matches_naive_loop() {
        let p = MfParams::new(3, 5, 4, 17).unwrap();
        let s = mf_bpr_score(2, &p).unwrap();
        let (pt, qt) = (p.store.get(p.users), p.store.get(p.items));
        for i in 0..5 {
            let mut acc = 0.0;
            for k in 0..4 {
                acc += pt.values[2 * 4 + k] * qt.values[i * 4 + k];
            }
            assert!((s[i] - acc).abs() < 1e-15);
        }
    }
}
