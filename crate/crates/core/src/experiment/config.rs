//! Typed experiment configuration.
//!
//! ```yaml
//! experiment:
//!   backend: pytorch            # accepted, ignored
//!   data_config:
//!     strategy: fixed
//!     train_path: ../data/{0}/train_elliot.tsv
//!     test_path: ../data/{0}/test_elliot.tsv
//!   dataset: gowalla
//!   top_k: 20                   # optional
//!   models:
//!     external.ContextGNN:
//!       meta:
//!         hyper_opt_alg: grid
//!         validation_rate: 20
//!         validation_metric: Recall@20
//!       lr: [0.001, 0.01]       # a list expands into grid points
//!       neigh: (16,16,16,16)
//! ```

use std::fmt;

use super::yaml::{self, Node, Value};
use crate::error::{Error, Result};
use crate::eval::MetricTag;
use crate::models::ModelKind;
use crate::tensor::Aggregator;
use crate::training::TrainConfig;

pub const DEFAULT_TOP_K: usize = 20;
pub const DEFAULT_SMOOTHING: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub backend: Option<String>,
    pub data: DataConfig,
    pub dataset: String,
    pub top_k: usize,
    pub models: Vec<ModelConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    /// Only `fixed` (pre-split train/test files) exists.
    pub strategy: String,
    /// Path templates; `{0}` is replaced by the dataset name.
    pub train_path: String,
    pub test_path: String,
}

impl DataConfig {
    pub fn resolve(template: &str, dataset: &str) -> String {
        template.replace("{0}", dataset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Meta {
    pub hyper_opt_alg: String,
    pub verbose: bool,
    pub save_weights: bool,
    pub validation_rate: usize,
    pub validation_metric: MetricTag,
    pub restore: bool,
}

impl Default for Meta {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hyper_opt_alg: "grid".into(),
            verbose: false,
            save_weights: false,
            validation_rate: t.validation_rate,
            validation_metric: t.validation_metric,
            restore: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HyperValue {
    Real(f64),
    Count(usize),
    Seed(u64),
    Aggr(Aggregator),
    Tuple(Vec<usize>),
    Flag(bool),
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Real(v) => write!(f, "{v}"),
            HyperValue::Count(v) => write!(f, "{v}"),
            HyperValue::Seed(v) => write!(f, "{v}"),
            HyperValue::Aggr(a) => write!(f, "{a}"),
            HyperValue::Tuple(v) => {
                let parts: Vec<String> = v.iter().map(usize::to_string).collect();
                write!(f, "({})", parts.join(","))
            }
            HyperValue::Flag(b) => f.write_str(if *b { "True" } else { "False" }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum HyperKind {
    Real,
    Count,
    Seed,
    Aggr,
    Tuple,
    Flag,
}

const HYPER_KEYS: [(&str, HyperKind); 12] = [
    ("lr", HyperKind::Real),
    ("epochs", HyperKind::Count),
    ("factors", HyperKind::Count),
    ("batch_size", HyperKind::Count),
    ("n_layers", HyperKind::Count),
    ("aggr", HyperKind::Aggr),
    ("channels", HyperKind::Count),
    ("max_steps", HyperKind::Count),
    ("neigh", HyperKind::Tuple),
    ("seed", HyperKind::Seed),
    ("warm_start_q", HyperKind::Flag),
    ("smoothing", HyperKind::Real),
];

/// One model block. `hyper` keeps declaration order; every entry holds one
/// value, or several when the key is a grid axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// The tag as written, e.g. `external.ContextGNN`.
    pub tag: String,
    pub kind: ModelKind,
    pub meta: Meta,
    pub hyper: Vec<(String, Vec<HyperValue>)>,
}

/// One fully specified run of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    /// The values chosen along each declared key, in declaration order.
    pub values: Vec<(String, HyperValue)>,
    pub train: TrainConfig,
    pub smoothing: f64,
}

impl GridPoint {
    /// `key=value` pairs joined by `_`, for file names and logs.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self.values.iter().map(|(k, v)| format!("{k}={v}")).collect();
        parts.join("_")
    }
}

impl ModelConfig {
    pub fn grid_size(&self) -> usize {
        self.hyper.iter().map(|(_, v)| v.len()).product()
    }

    /// Grid points in declaration order, the last key varying fastest.
    pub fn grid(&self) -> Vec<GridPoint> {
        let n = self.grid_size();
        (0..n)
            .map(|index| {
                let mut rem = index;
                let mut values = vec![(String::new(), HyperValue::Flag(false)); self.hyper.len()];
                for (slot, (key, options)) in self.hyper.iter().enumerate().rev() {
                    values[slot] = (key.clone(), options[rem % options.len()].clone());
                    rem /= options.len();
                }
                self.point(index, values)
            })
            .collect()
    }

    fn point(&self, index: usize, values: Vec<(String, HyperValue)>) -> GridPoint {
        let mut t = TrainConfig {
            validation_rate: self.meta.validation_rate,
            validation_metric: self.meta.validation_metric,
            ..TrainConfig::default()
        };
        let mut smoothing = DEFAULT_SMOOTHING;
        for (key, v) in &values {
            match (key.as_str(), v) {
                ("lr", HyperValue::Real(x)) => t.lr = *x,
                ("smoothing", HyperValue::Real(x)) => smoothing = *x,
                ("epochs", HyperValue::Count(x)) => t.epochs = *x,
                ("factors", HyperValue::Count(x)) => t.factors = *x,
                ("batch_size", HyperValue::Count(x)) => t.batch_size = *x,
                ("n_layers", HyperValue::Count(x)) => t.n_layers = *x,
                ("channels", HyperValue::Count(x)) => t.channels = *x,
                ("max_steps", HyperValue::Count(x)) => t.max_steps = *x,
                ("aggr", HyperValue::Aggr(a)) => t.aggr = *a,
                ("neigh", HyperValue::Tuple(x)) => t.neigh = x.clone(),
                ("seed", HyperValue::Seed(x)) => t.seed = *x,
                ("warm_start_q", HyperValue::Flag(x)) => t.warm_start_q = *x,
                _ => unreachable!("typed at parse time"),
            }
        }
        GridPoint {
            index,
            values,
            train: t,
            smoothing,
        }
    }
}

impl ExperimentConfig {
    /// Applies command-line overrides: a different dataset name and/or a
    /// single model, matched by tag or by bare model name.
    pub fn narrow(mut self, dataset: Option<&str>, model: Option<&str>) -> Result<Self> {
        if let Some(d) = dataset {
            self.dataset = d.to_string();
        }
        if let Some(m) = model {
            let kind: Option<ModelKind> = m.parse().ok();
            self.models.retain(|c| c.tag == m || Some(c.kind) == kind);
            if self.models.is_empty() {
                return Err(Error::config(0, format!("no model in the config matches {m:?}")));
            }
        }
        Ok(self)
    }
}

fn scalar<'a>(node: &'a Node, what: &str) -> Result<&'a str> {
    node.scalar()
        .ok_or_else(|| Error::config(node.line, format!("{what} must be a scalar")))
}

fn parse_bool(node: &Node, what: &str) -> Result<bool> {
    match scalar(node, what)? {
        "True" | "true" => Ok(true),
        "False" | "false" => Ok(false),
        s => Err(Error::config(node.line, format!("{what} must be True or False, got {s:?}"))),
    }
}

fn parse_count(node: &Node, what: &str) -> Result<usize> {
    let s = scalar(node, what)?;
    s.parse()
        .map_err(|_| Error::config(node.line, format!("{what} must be a non-negative integer, got {s:?}")))
}

fn parse_hyper_value(node: &Node, key: &str, kind: HyperKind) -> Result<HyperValue> {
    let bad = |msg: String| Error::config(node.line, msg);
    Ok(match kind {
        HyperKind::Real => {
            let s = scalar(node, key)?;
            let v: f64 = s.parse().map_err(|_| bad(format!("{key} must be a number, got {s:?}")))?;
            if !v.is_finite() {
                return Err(bad(format!("{key} must be finite")));
            }
            HyperValue::Real(v)
        }
        HyperKind::Count => HyperValue::Count(parse_count(node, key)?),
        HyperKind::Seed => {
            let s = scalar(node, key)?;
            HyperValue::Seed(s.parse().map_err(|_| bad(format!("{key} must be an integer, got {s:?}")))?)
        }
        HyperKind::Aggr => HyperValue::Aggr(scalar(node, key)?.parse().map_err(bad)?),
        HyperKind::Flag => HyperValue::Flag(parse_bool(node, key)?),
        HyperKind::Tuple => match &node.value {
            Value::Tuple(items) => HyperValue::Tuple(
                items
                    .iter()
                    .map(|n| parse_count(n, key))
                    .collect::<Result<_>>()?,
            ),
            _ => return Err(bad(format!("{key} must be a tuple like (16,16)"))),
        },
    })
}

fn parse_meta(node: &Node) -> Result<Meta> {
    let mut meta = Meta::default();
    for (key, v) in node.as_map()? {
        match key.as_str() {
            "hyper_opt_alg" => {
                let s = scalar(v, key)?;
                if s != "grid" {
                    return Err(Error::config(v.line, format!("hyper_opt_alg {s:?} is not supported (only grid)")));
                }
                meta.hyper_opt_alg = s.to_string();
            }
            "verbose" => meta.verbose = parse_bool(v, key)?,
            "save_weights" => meta.save_weights = parse_bool(v, key)?,
            "restore" => meta.restore = parse_bool(v, key)?,
            "validation_rate" => meta.validation_rate = parse_count(v, key)?,
            "validation_metric" => {
                meta.validation_metric = scalar(v, key)?.parse().map_err(|e| Error::config(v.line, e))?;
            }
            _ => return Err(Error::config(v.line, format!("unknown meta key {key:?}"))),
        }
    }
    Ok(meta)
}

fn parse_model(tag: &str, node: &Node) -> Result<ModelConfig> {
    let kind: ModelKind = tag.parse().map_err(|e| Error::config(node.line, e))?;
    let mut meta = Meta::default();
    let mut hyper = Vec::new();
    let mut lines = Vec::new();
    for (key, v) in node.as_map()? {
        if key == "meta" {
            meta = parse_meta(v)?;
            continue;
        }
        let kind = HYPER_KEYS
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::config(v.line, format!("unknown hyperparameter {key:?}")))?;
        let values = match &v.value {
            Value::List(items) if items.is_empty() => {
                return Err(Error::config(v.line, format!("{key} grid is empty")));
            }
            Value::List(items) => items
                .iter()
                .map(|n| parse_hyper_value(n, key, kind))
                .collect::<Result<Vec<_>>>()?,
            _ => vec![parse_hyper_value(v, key, kind)?],
        };
        hyper.push((key.clone(), values));
        lines.push((key.clone(), v.line));
    }
    let model = ModelConfig {
        tag: tag.to_string(),
        kind,
        meta,
        hyper,
    };
    if model.meta.validation_rate == 0 {
        return Err(Error::config(node.line, "validation_rate must be >= 1"));
    }
    if kind.is_trainable() {
        for point in model.grid() {
            if let Err(e) = point.train.validate(kind) {
                let msg = e.to_string();
                // point at the key the message is about, if it was written
                let line = msg
                    .split(|c: char| !(c.is_alphanumeric() || c == '_'))
                    .find_map(|w| lines.iter().find(|(k, _)| k == w).map(|(_, l)| *l))
                    .unwrap_or(node.line);
                return Err(Error::config(line, format!("{tag}: {msg}")));
            }
        }
    }
    Ok(model)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let root = yaml::parse(text)?;
    let map = root.as_map()?;
    for (key, v) in map {
        if key != "experiment" {
            return Err(Error::config(v.line, format!("unknown top-level key {key:?}")));
        }
    }
    let exp = root
        .get("experiment")
        .ok_or_else(|| Error::config(root.line, "missing `experiment`"))?;
    let mut backend = None;
    let mut data = None;
    let mut dataset = None;
    let mut top_k = DEFAULT_TOP_K;
    let mut models = None;
    for (key, v) in exp.as_map()? {
        match key.as_str() {
            "backend" => backend = Some(scalar(v, key)?.to_string()),
            "dataset" => dataset = Some(scalar(v, key)?.to_string()),
            "top_k" => {
                top_k = parse_count(v, key)?;
                if top_k == 0 {
                    return Err(Error::config(v.line, "top_k must be >= 1"));
                }
            }
            "data_config" => {
                let (mut strategy, mut train, mut test) = (None, None, None);
                for (k, d) in v.as_map()? {
                    let s = scalar(d, k)?.to_string();
                    match k.as_str() {
                        "strategy" if s == "fixed" => strategy = Some(s),
                        "strategy" => {
                            return Err(Error::config(d.line, format!("strategy {s:?} is not supported (only fixed)")));
                        }
                        "train_path" => train = Some(s),
                        "test_path" => test = Some(s),
                        _ => return Err(Error::config(d.line, format!("unknown data_config key {k:?}"))),
                    }
                }
                let missing = |name: &str| Error::config(v.line, format!("data_config needs {name}"));
                data = Some(DataConfig {
                    strategy: strategy.ok_or_else(|| missing("strategy"))?,
                    train_path: train.ok_or_else(|| missing("train_path"))?,
                    test_path: test.ok_or_else(|| missing("test_path"))?,
                });
            }
            "models" => {
                let parsed = v
                    .as_map()?
                    .iter()
                    .map(|(tag, m)| parse_model(tag, m))
                    .collect::<Result<Vec<_>>>()?;
                if parsed.is_empty() {
                    return Err(Error::config(v.line, "models is empty"));
                }
                models = Some(parsed);
            }
            _ => return Err(Error::config(v.line, format!("unknown experiment key {key:?}"))),
        }
    }
    let missing = |name: &str| Error::config(exp.line, format!("experiment needs {name}"));
    Ok(ExperimentConfig {
        backend,
        data: data.ok_or_else(|| missing("data_config"))?,
        dataset: dataset.ok_or_else(|| missing("dataset"))?,
        top_k,
        models: models.ok_or_else(|| missing("models"))?,
    })
}

fn plain(text: impl Into<String>) -> Node {
    Node {
        line: 0,
        value: Value::Scalar {
            text: text.into(),
            quoted: false,
        },
    }
}

fn map(entries: Vec<(&str, Node)>) -> Node {
    Node {
        line: 0,
        value: Value::Map(entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()),
    }
}

fn hyper_node(v: &HyperValue) -> Node {
    match v {
        HyperValue::Tuple(items) => Node {
            line: 0,
            value: Value::Tuple(items.iter().map(|x| plain(x.to_string())).collect()),
        },
        other => plain(other.to_string()),
    }
}

/// Canonical text of `config`; `parse_config(&render_config(c)) == c`.
pub fn render_config(config: &ExperimentConfig) -> String {
    let mut exp = Vec::new();
    if let Some(b) = &config.backend {
        exp.push(("backend", plain(b.clone())));
    }
    exp.push((
        "data_config",
        map(vec![
            ("strategy", plain(config.data.strategy.clone())),
            ("train_path", plain(config.data.train_path.clone())),
            ("test_path", plain(config.data.test_path.clone())),
        ]),
    ));
    exp.push(("dataset", plain(config.dataset.clone())));
    exp.push(("top_k", plain(config.top_k.to_string())));
    let models = config
        .models
        .iter()
        .map(|m| {
            let flag = |b: bool| plain(HyperValue::Flag(b).to_string());
            let meta = map(vec![
                ("hyper_opt_alg", plain(m.meta.hyper_opt_alg.clone())),
                ("verbose", flag(m.meta.verbose)),
                ("save_weights", flag(m.meta.save_weights)),
                ("validation_rate", plain(m.meta.validation_rate.to_string())),
                ("validation_metric", plain(m.meta.validation_metric.to_string())),
                ("restore", flag(m.meta.restore)),
            ]);
            let mut entries = vec![("meta".to_string(), meta)];
            for (key, values) in &m.hyper {
                let node = if values.len() == 1 {
                    hyper_node(&values[0])
                } else {
                    Node {
                        line: 0,
                        value: Value::List(values.iter().map(hyper_node).collect()),
                    }
                };
                entries.push((key.clone(), node));
            }
            (
                m.tag.clone(),
                Node {
                    line: 0,
                    value: Value::Map(entries),
                },
            )
        })
        .collect();
    exp.push((
        "models",
        Node {
            line: 0,
            value: Value::Map(models),
        },
    ));
    yaml::render(&map(vec![("experiment", map(exp))]))
}
