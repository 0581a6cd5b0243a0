//! User/item ID maps and the train/test/validation interaction sets.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Bijection between opaque original IDs and dense indices `0..len`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdMap {
    org_ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    /// Builds a map where `org_ids[k]` receives index `k`.
    pub fn new(org_ids: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(org_ids.len());
        for (k, id) in org_ids.iter().enumerate() {
            if index.insert(id.clone(), k).is_some() {
                return Err(Error::Dataset(format!("duplicate original id {id:?}")));
            }
        }
        Ok(Self { org_ids, index })
    }

    /// Identity map whose original IDs are the decimal indices themselves.
    pub fn identity(len: usize) -> Self {
        let org_ids: Vec<String> = (0..len).map(|k| k.to_string()).collect();
        let index = org_ids.iter().cloned().zip(0..).collect();
        Self { org_ids, index }
    }

    pub fn len(&self) -> usize {
        self.org_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.org_ids.is_empty()
    }

    pub fn org_id(&self, remap: usize) -> Option<&str> {
        self.org_ids.get(remap).map(String::as_str)
    }

    pub fn remap(&self, org: &str) -> Option<usize> {
        self.index.get(org).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &str)> {
        self.org_ids.iter().enumerate().map(|(k, s)| (k, s.as_str()))
    }
}

/// Which edge set(s) a graph is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    Validation,
    TrainTest,
}

/// Static user–item interactions with dense indices.
///
/// Edge lists are kept sorted by `(user, item)` with duplicates removed, so
/// two datasets holding the same sets compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    pub num_users: usize,
    pub num_items: usize,
    pub train: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub val: Option<Vec<(usize, usize)>>,
    pub user_ids: IdMap,
    pub item_ids: IdMap,
}

fn canonical(mut edges: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    edges.sort_unstable();
    edges.dedup();
    edges
}

fn check_range(
    name: &str,
    edges: &[(usize, usize)],
    num_users: usize,
    num_items: usize,
) -> Result<()> {
    for &(u, i) in edges {
        if u >= num_users || i >= num_items {
            return Err(Error::Dataset(format!(
                "{name} edge ({u}, {i}) outside {num_users} users x {num_items} items"
            )));
        }
    }
    Ok(())
}

fn check_disjoint(a_name: &str, a: &[(usize, usize)], b_name: &str, b: &[(usize, usize)]) -> Result<()> {
    // both sorted
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                return Err(Error::Dataset(format!(
                    "pair {:?} appears in both {a_name} and {b_name}",
                    a[x]
                )))
            }
        }
    }
    Ok(())
}

impl InteractionDataset {
    pub fn new(
        user_ids: IdMap,
        item_ids: IdMap,
        train: Vec<(usize, usize)>,
        test: Vec<(usize, usize)>,
        val: Option<Vec<(usize, usize)>>,
    ) -> Result<Self> {
        let (num_users, num_items) = (user_ids.len(), item_ids.len());
        let train = canonical(train);
        let test = canonical(test);
        let val = val.map(canonical);
        check_range("train", &train, num_users, num_items)?;
        check_range("test", &test, num_users, num_items)?;
        check_disjoint("train", &train, "test", &test)?;
        if let Some(v) = &val {
            check_range("validation", v, num_users, num_items)?;
            check_disjoint("train", &train, "validation", v)?;
        }
        Ok(Self {
            num_users,
            num_items,
            train,
            test,
            val,
            user_ids,
            item_ids,
        })
    }

    /// Dataset over `num_users` x `num_items` with identity ID maps.
    pub fn from_indices(
        num_users: usize,
        num_items: usize,
        train: Vec<(usize, usize)>,
        test: Vec<(usize, usize)>,
    ) -> Result<Self> {
        Self::new(
            IdMap::identity(num_users),
            IdMap::identity(num_items),
            train,
            test,
            None,
        )
    }

    /// Edges of one split. `TrainTest` concatenates (it is only meaningful
    /// for graph construction, which de-duplicates).
    pub fn edges(&self, split: Split) -> Vec<(usize, usize)> {
        match split {
            Split::Train => self.train.clone(),
            Split::Test => self.test.clone(),
            Split::Validation => self.val.clone().unwrap_or_default(),
            Split::TrainTest => self.train.iter().chain(&self.test).copied().collect(),
        }
    }

    /// Items per user for a split, each list sorted ascending.
    pub fn items_by_user(&self, split: Split) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_users];
        for (u, i) in self.edges(split) {
            out[u].push(i);
        }
        for row in &mut out {
            row.sort_unstable();
            row.dedup();
        }
        out
    }

    pub fn has_validation(&self) -> bool {
        self.val.as_ref().is_some_and(|v| !v.is_empty())
    }
}
