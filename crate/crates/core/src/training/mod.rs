//! BPR training with uniform negatives, Adam, a global step cap and
//! periodic validation with best-checkpoint retention.

mod adam;
mod bpr;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use bpr::{bpr_loss, bpr_loss_on_tape, neg_log_sigmoid, sample_negatives};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::dataset::{InteractionDataset, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricTag};
use crate::graph::{build_graph, sample_subgraph, BipartiteGraph, Fanouts};
use crate::models::{
    lightgcn_propagate_on_tape, score_pairs, ContextGnnParams, ContextGnnScorer, LightGcnParams,
    LightGcnScorer, MfParams, MfScorer, ModelKind, Routing, Scorer,
};
use crate::rng::{mix_seed, rng_for};
use crate::tensor::{embedding_lookup, Aggregator, NodeId, ParamStore, Tape};

/// Hyperparameters of one training run. Defaults are the reference
/// experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub validation_rate: usize,
    pub validation_metric: MetricTag,
    pub factors: usize,
    pub channels: usize,
    pub n_layers: usize,
    pub aggr: Aggregator,
    pub neigh: Vec<usize>,
    /// Initialise the two-tower item matrix from a completed MF-BPR run
    /// (ContextGNN only).
    pub warm_start_q: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            epochs: 20,
            batch_size: 128,
            max_steps: 2000,
            seed: 42,
            validation_rate: 20,
            validation_metric: MetricTag::default(),
            factors: 128,
            channels: 128,
            n_layers: 4,
            aggr: Aggregator::Sum,
            neigh: vec![16, 16, 16, 16],
            warm_start_q: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        let counts = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("max_steps", self.max_steps),
            ("validation_rate", self.validation_rate),
            ("factors", self.factors),
            ("channels", self.channels),
            ("n_layers", self.n_layers),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Training(format!("{name} must be >= 1")));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Training(format!("lr must be positive, got {}", self.lr)));
        }
        if kind == ModelKind::ContextGnn {
            if self.neigh.len() != self.n_layers {
                return Err(Error::Training(format!(
                    "neigh has {} entries but n_layers is {}",
                    self.neigh.len(),
                    self.n_layers
                )));
            }
            Fanouts::new(self.neigh.clone())?;
            if self.factors != self.channels {
                return Err(Error::Training(format!(
                    "factors ({}) and channels ({}) must agree for ContextGNN",
                    self.factors, self.channels
                )));
            }
        }
        Ok(())
    }

    pub fn fanouts(&self) -> Result<Fanouts> {
        Fanouts::new(self.neigh.clone())
    }
}

/// Parameters of a trained model.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    ContextGnn {
        params: ContextGnnParams,
        fanouts: Fanouts,
        seed: u64,
    },
    MfBpr(MfParams),
    LightGcn(LightGcnParams),
}

impl TrainedModel {
    /// Fresh, untrained parameters for `kind` sized to `dataset`.
    pub fn init(kind: ModelKind, dataset: &InteractionDataset, config: &TrainConfig) -> Result<Self> {
        let (nu, ni) = (dataset.num_users, dataset.num_items);
        match kind {
            ModelKind::ContextGnn => Ok(TrainedModel::ContextGnn {
                params: ContextGnnParams::new(nu, ni, config.channels, config.n_layers, config.seed)?,
                fanouts: config.fanouts()?,
                seed: config.seed,
            }),
            ModelKind::MfBpr => Ok(TrainedModel::MfBpr(MfParams::new(nu, ni, config.factors, config.seed)?)),
            ModelKind::LightGcn => Ok(TrainedModel::LightGcn(LightGcnParams::new(
                nu,
                ni,
                config.factors,
                config.n_layers,
                config.seed,
            )?)),
            ModelKind::ItemFilter => Err(Error::Training("ItemFilter has no trainable parameters".into())),
        }
    }

    /// Rebinds a checkpointed store to the layout `kind` expects.
    pub fn from_store(kind: ModelKind, store: ParamStore, config: &TrainConfig) -> Result<Self> {
        match kind {
            ModelKind::ContextGnn => Ok(TrainedModel::ContextGnn {
                params: ContextGnnParams::from_store(store)?,
                fanouts: config.fanouts()?,
                seed: config.seed,
            }),
            ModelKind::MfBpr => Ok(TrainedModel::MfBpr(MfParams::from_store(store)?)),
            ModelKind::LightGcn => Ok(TrainedModel::LightGcn(LightGcnParams::from_store(store, config.n_layers)?)),
            ModelKind::ItemFilter => Err(Error::Training("ItemFilter has no trainable parameters".into())),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::ContextGnn { .. } => ModelKind::ContextGnn,
            TrainedModel::MfBpr(_) => ModelKind::MfBpr,
            TrainedModel::LightGcn(_) => ModelKind::LightGcn,
        }
    }

    pub fn store(&self) -> &ParamStore {
        match self {
            TrainedModel::ContextGnn { params, .. } => &params.store,
            TrainedModel::MfBpr(p) => &p.store,
            TrainedModel::LightGcn(p) => &p.store,
        }
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        match self {
            TrainedModel::ContextGnn { params, .. } => &mut params.store,
            TrainedModel::MfBpr(p) => &mut p.store,
            TrainedModel::LightGcn(p) => &mut p.store,
        }
    }

    /// Scorer over `graph`, which should be the train graph.
    pub fn scorer<'a>(&'a self, graph: &'a BipartiteGraph) -> Result<Box<dyn Scorer + 'a>> {
        Ok(match self {
            TrainedModel::ContextGnn { params, fanouts, seed } => Box::new(ContextGnnScorer {
                params,
                graph,
                fanouts: fanouts.clone(),
                seed: *seed,
                routing: Routing::Sampled,
            }),
            TrainedModel::MfBpr(p) => Box::new(MfScorer(p)),
            TrainedModel::LightGcn(p) => Box::new(LightGcnScorer::new(p, graph)?),
        })
    }

    /// Mean BPR loss of `(user, positive, negative)` triples, on `tape`.
    /// `context_seed` varies the ContextGNN subgraph samples per batch.
    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        graph: &BipartiteGraph,
        adjacency: Option<&Arc<[(usize, usize, f64)]>>,
        triples: &[(usize, usize, usize)],
        context_seed: u64,
    ) -> Result<NodeId> {
        let (pos, neg) = match self {
            TrainedModel::ContextGnn { params, fanouts, .. } => {
                let mut users: Vec<usize> = triples.iter().map(|t| t.0).collect();
                users.sort_unstable();
                users.dedup();
                let subgraphs: Vec<_> = users
                    .iter()
                    .map(|&u| sample_subgraph(graph, u, fanouts, context_seed))
                    .collect();
                let slot = |u: usize| users.binary_search(&u).expect("user collected above");
                let mut requests = Vec::with_capacity(2 * triples.len());
                requests.extend(triples.iter().map(|&(u, p, _)| (slot(u), p)));
                requests.extend(triples.iter().map(|&(u, _, n)| (slot(u), n)));
                let scores = score_pairs(tape, params, &subgraphs, &requests)?;
                let n = triples.len();
                let pos = tape.gather(scores, &(0..n).collect::<Vec<_>>())?;
                let neg = tape.gather(scores, &(n..2 * n).collect::<Vec<_>>())?;
                (pos, neg)
            }
            TrainedModel::MfBpr(p) => {
                let users: Vec<usize> = triples.iter().map(|t| t.0).collect();
                let pu = embedding_lookup(tape, &p.store, p.users, &users)?;
                let qp = embedding_lookup(tape, &p.store, p.items, &triples.iter().map(|t| t.1).collect::<Vec<_>>())?;
                let qn = embedding_lookup(tape, &p.store, p.items, &triples.iter().map(|t| t.2).collect::<Vec<_>>())?;
                (tape.row_dot(pu, qp)?, tape.row_dot(pu, qn)?)
            }
            TrainedModel::LightGcn(p) => {
                let adjacency = adjacency.ok_or_else(|| Error::Training("LightGCN needs the adjacency".into()))?;
                let all = lightgcn_propagate_on_tape(tape, p, adjacency)?;
                let nu = graph.num_users();
                let eu = tape.gather(all, &triples.iter().map(|t| t.0).collect::<Vec<_>>())?;
                let ep = tape.gather(all, &triples.iter().map(|t| nu + t.1).collect::<Vec<_>>())?;
                let en = tape.gather(all, &triples.iter().map(|t| nu + t.2).collect::<Vec<_>>())?;
                (tape.row_dot(eu, ep)?, tape.row_dot(eu, en)?)
            }
        };
        bpr_loss_on_tape(tape, pos, neg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub validation: Option<(MetricTag, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    /// Split used for validation (test when the dataset has none).
    pub validation_split: Split,
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        if self.validation_split == Split::Test {
            out.push_str("# validation split: test (dataset has no validation split)\n");
        }
        out.push_str("step\tepoch\tloss\tval_metric\tval_value\n");
        for r in &self.rows {
            let (metric, value) = match &r.validation {
                Some((m, v)) => (m.to_string(), v.to_string()),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", r.step, r.epoch, r.loss, metric, value);
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation checkpoint.
    pub model: TrainedModel,
    pub log: TrainLog,
    pub steps: usize,
    /// `(epoch, value)` of the retained checkpoint.
    pub best: (usize, f64),
}

/// Trains `kind` on the train split of `dataset`.
///
/// Each epoch shuffles the train edges, pairs every positive with one
/// uniform negative and takes one Adam step per batch. Training stops after
/// `epochs` or once `max_steps` optimizer steps have run, whichever comes
/// first. Validation runs every `validation_rate` epochs and at the final
/// epoch; the best-scoring parameters are returned.
pub fn train(kind: ModelKind, dataset: &InteractionDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate(kind)?;
    if dataset.train.is_empty() {
        return Err(Error::Training("train split is empty".into()));
    }
    let graph = build_graph(dataset, Split::Train)?;
    let mut model = TrainedModel::init(kind, dataset, config)?;
    if config.warm_start_q {
        if let TrainedModel::ContextGnn { params, .. } = &mut model {
            let mf_config = TrainConfig {
                warm_start_q: false,
                ..config.clone()
            };
            let mf = train(ModelKind::MfBpr, dataset, &mf_config)?;
            let TrainedModel::MfBpr(mf) = mf.model else {
                unreachable!("MF training returns MF parameters")
            };
            let q = params.q;
            params.store.get_mut(q).values = mf.store.get(mf.items).values.clone();
        }
    }
    let adjacency = matches!(kind, ModelKind::LightGcn).then(|| crate::models::normalized_adjacency(&graph));
    let validation_split = if dataset.has_validation() {
        Split::Validation
    } else {
        Split::Test
    };
    let mut adam = AdamState::new(model.store());
    let adam_cfg = AdamConfig::new(config.lr);
    let mut edges = dataset.train.clone();
    let mut log = TrainLog {
        validation_split,
        rows: Vec::new(),
    };
    let mut steps = 0usize;
    let mut best: Option<(usize, f64, ParamStore)> = None;

    for epoch in 1..=config.epochs {
        let mut rng = rng_for(config.seed, &[epoch as u64]);
        edges.shuffle(&mut rng);
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for (b, chunk) in edges.chunks(config.batch_size).enumerate() {
            if steps >= config.max_steps {
                break;
            }
            let triples = chunk
                .iter()
                .map(|&(u, i)| Ok((u, i, sample_negatives(&graph, u, 1, &mut rng)?[0])))
                .collect::<Result<Vec<_>>>()?;
            let mut tape = Tape::new();
            let ctx = mix_seed(config.seed, &[epoch as u64, b as u64]);
            let loss = model.batch_loss(&mut tape, &graph, adjacency.as_ref(), &triples, ctx)?;
            let value = tape.value(loss).scalar()?;
            let store = model.store_mut();
            store.zero_grad();
            tape.backward(loss, store)?;
            adam_step(store, &mut adam, &adam_cfg)?;
            steps += 1;
            loss_sum += value;
            batches += 1;
        }
        let capped = steps >= config.max_steps;
        let last = capped || epoch == config.epochs;
        let mut row = LogRow {
            step: steps,
            epoch,
            loss: if batches > 0 { loss_sum / batches as f64 } else { f64::NAN },
            validation: None,
        };
        if batches > 0 && !row.loss.is_finite() {
            return Err(Error::NonFinite(format!("epoch {epoch} loss is {}", row.loss)));
        }
        if epoch % config.validation_rate == 0 || last {
            let tag = config.validation_metric;
            let report = evaluate(model.scorer(&graph)?.as_ref(), dataset, tag.k, validation_split)?;
            let value = report.value(tag.kind);
            row.validation = Some((tag, value));
            if best.as_ref().is_none_or(|(_, b, _)| value > *b) {
                best = Some((epoch, value, model.store().clone()));
            }
        }
        if batches > 0 || row.validation.is_some() {
            log.rows.push(row);
        }
        if last {
            break;
        }
    }

    let (best_epoch, best_value, best_store) = best.expect("the final epoch always validates");
    model.store_mut().copy_values_from(&best_store)?;
    Ok(TrainOutcome {
        model,
        log,
        steps,
        best: (best_epoch, best_value),
    })
}
