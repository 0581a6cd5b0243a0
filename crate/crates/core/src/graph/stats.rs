use std::fmt;

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    /// `1 - interactions / (users * items)`.
    pub sparsity: f64,
}

impl DatasetStats {
    pub fn from_counts(users: usize, items: usize, interactions: usize) -> Result<Self> {
        if users == 0 || items == 0 {
            return Err(Error::Dataset(format!(
                "statistics need at least one user and one item (got {users} x {items})"
            )));
        }
        let cells = users as f64 * items as f64;
        Ok(Self {
            users,
            items,
            interactions,
            sparsity: 1.0 - interactions as f64 / cells,
        })
    }

    /// Sparsity rounded to 4 decimals, as printed in dataset tables.
    pub fn sparsity_4dp(&self) -> String {
        format!("{:.4}", self.sparsity)
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "users={} items={} interactions={} sparsity={}",
            self.users,
            self.items,
            self.interactions,
            self.sparsity_4dp()
        )
    }
}

/// Counts over all interaction splits present in the dataset.
pub fn dataset_stats(dataset: &InteractionDataset) -> Result<DatasetStats> {
    let interactions =
        dataset.train.len() + dataset.test.len() + dataset.val.as_ref().map_or(0, Vec::len);
    DatasetStats::from_counts(dataset.num_users, dataset.num_items, interactions)
}
