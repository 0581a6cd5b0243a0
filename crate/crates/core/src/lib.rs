//! Hybrid pair-wise / two-tower graph recommendation (ContextGNN-style
//! scoring) together with the pipeline needed to benchmark it reproducibly:
//! interaction file formats, a config-driven experiment runner, BPR
//! training and masked top-K evaluation.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataset`] and [`graph`]: interaction data, CSR bipartite graphs,
//!   k-hop neighborhoods, fanout sampling and locality diagnostics.
//! - [`tensor`]: a small dense reverse-mode autodiff tape with exactly the
//!   primitives the models need, plus finite-difference gradient checks.
//! - [`models`]: the fused ContextGNN scorer and three simplified baselines.
//! - [`training`]: BPR loss, negative sampling, Adam and the training loop.
//! - [`eval`]: masked top-K ranking, Recall@K and nDCG@K.
//! - [`data`]: readers/writers for every on-disk format and a synthetic
//!   planted-block generator.
//! - [`experiment`]: YAML-subset config parsing, the experiment runner and
//!   results reporting.

pub mod data;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod graph;
pub mod models;
pub mod rng;
pub mod tensor;
pub mod training;

pub use dataset::{IdMap, InteractionDataset, Split};
pub use error::{Error, Result};
pub use graph::{BipartiteGraph, Fanouts, Node, SampledSubgraph};
