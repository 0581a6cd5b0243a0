use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;

use super::config::{DataConfig, ExperimentConfig, GridPoint, ModelConfig};
use super::report::{write_results_file, ResultRow};
use crate::data::read_elliot_dataset;
use crate::dataset::{InteractionDataset, Split};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::graph::{build_graph, BipartiteGraph};
use crate::models::{checkpoint, ItemFilterScorer};
use crate::training::{train, TrainedModel};

pub const RESULTS_ROOT_ENV: &str = "GRAVEL_RESULTS_ROOT";

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Base for relative `train_path` / `test_path`.
    pub data_root: PathBuf,
    pub results_root: PathBuf,
    /// Stamp for the results file name.
    pub timestamp: NaiveDateTime,
}

impl RunOptions {
    /// `GRAVEL_RESULTS_ROOT` wins over `default` when set and non-empty.
    pub fn results_root_from_env(default: PathBuf) -> PathBuf {
        std::env::var_os(RESULTS_ROOT_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or(default)
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub results_path: PathBuf,
    pub rows: Vec<ResultRow>,
    /// Chosen grid point per model, in row order.
    pub selected: Vec<String>,
    pub notes: Vec<String>,
}

/// A failed run. Rows finished before the failure are still written.
#[derive(Debug)]
pub struct RunError {
    pub source: Error,
    pub model: Option<String>,
    pub partial_results: Option<PathBuf>,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(m) = &self.model {
            write!(f, "model {m}: ")?;
        }
        write!(f, "{}", self.source)?;
        if let Some(p) = &self.partial_results {
            write!(f, " (partial results written to {})", p.display())?;
        }
        Ok(())
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl From<Error> for RunError {
    fn from(source: Error) -> Self {
        Self {
            source,
            model: None,
            partial_results: None,
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        self.source.exit_code()
    }
}

/// `rec_cutoff_<K>_relthreshold_0_<YYYYMMDD_HHMMSS>.tsv`
pub fn results_file_name(top_k: usize, timestamp: &NaiveDateTime) -> String {
    format!("rec_cutoff_{top_k}_relthreshold_0_{}.tsv", timestamp.format("%Y%m%d_%H%M%S"))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Loads the configured train/test interaction files for `config.dataset`.
pub fn load_dataset(config: &ExperimentConfig, data_root: &Path) -> Result<InteractionDataset> {
    let resolve = |t: &str| data_root.join(DataConfig::resolve(t, &config.dataset));
    read_elliot_dataset(&resolve(&config.data.train_path), &resolve(&config.data.test_path))
}

struct Layout {
    performance: PathBuf,
    logs: PathBuf,
    weights: PathBuf,
}

enum Fitted {
    Trained(TrainedModel),
    Filter(f64),
}

struct Candidate {
    point: GridPoint,
    fitted: Fitted,
    selection: f64,
}

fn fit_point(
    model: &ModelConfig,
    point: &GridPoint,
    dataset: &InteractionDataset,
    graph: &BipartiteGraph,
    layout: &Layout,
    validation_split: Split,
    log: &mut String,
) -> Result<Candidate> {
    let metric = model.meta.validation_metric;
    let name = model.kind.name();
    let suffix = if model.grid_size() > 1 {
        format!("_{}", point.index)
    } else {
        String::new()
    };
    let fitted = if !model.kind.is_trainable() {
        Fitted::Filter(point.smoothing)
    } else {
        let weights = layout.weights.join(format!("{name}.grvl"));
        if model.meta.restore && weights.exists() {
            let _ = writeln!(log, "{name}: restored weights from {}", weights.display());
            Fitted::Trained(TrainedModel::from_store(model.kind, checkpoint::load(&weights)?, &point.train)?)
        } else {
            let outcome = train(model.kind, dataset, &point.train)?;
            outcome.log.write(&layout.logs.join(format!("{name}{suffix}.tsv")))?;
            let _ = writeln!(
                log,
                "{name} [{}]: {} steps, best {metric} {} at epoch {}",
                point.label(),
                outcome.steps,
                outcome.best.1,
                outcome.best.0
            );
            Fitted::Trained(outcome.model)
        }
    };
    let report = match &fitted {
        Fitted::Trained(m) => evaluate(m.scorer(graph)?.as_ref(), dataset, metric.k, validation_split)?,
        Fitted::Filter(s) => evaluate(
            &ItemFilterScorer {
                graph,
                smoothing: *s,
            },
            dataset,
            metric.k,
            validation_split,
        )?,
    };
    Ok(Candidate {
        point: point.clone(),
        fitted,
        selection: report.value(metric.kind),
    })
}

fn run_model(
    model: &ModelConfig,
    config: &ExperimentConfig,
    dataset: &InteractionDataset,
    graph: &BipartiteGraph,
    layout: &Layout,
    log: &mut String,
) -> Result<(ResultRow, String)> {
    let validation_split = if dataset.has_validation() {
        Split::Validation
    } else {
        Split::Test
    };
    let mut best: Option<Candidate> = None;
    for point in model.grid() {
        if model.meta.verbose {
            eprintln!("{}: grid point {} [{}]", model.tag, point.index, point.label());
        }
        let c = fit_point(model, &point, dataset, graph, layout, validation_split, log)?;
        if best.as_ref().is_none_or(|b| c.selection > b.selection) {
            best = Some(c);
        }
    }
    let best = best.expect("grids have at least one point");
    let report = match &best.fitted {
        Fitted::Trained(m) => {
            if model.meta.save_weights {
                create_dir(&layout.weights)?;
                checkpoint::save(&layout.weights.join(format!("{}.grvl", model.kind.name())), m.store())?;
            }
            evaluate(m.scorer(graph)?.as_ref(), dataset, config.top_k, Split::Test)?
        }
        Fitted::Filter(s) => evaluate(
            &ItemFilterScorer {
                graph,
                smoothing: *s,
            },
            dataset,
            config.top_k,
            Split::Test,
        )?,
    };
    Ok((
        ResultRow {
            model: model.kind.name().to_string(),
            recall: report.recall,
            ndcg: report.ndcg,
        },
        best.point.label(),
    ))
}

/// Trains (where applicable), selects and evaluates every configured model,
/// then writes `<results_root>/<dataset>/performance/rec_cutoff_...tsv`.
/// Training logs and a run log go to `<results_root>/<dataset>/logs`, and
/// checkpoints to `<results_root>/<dataset>/weights` when `save_weights` is
/// set.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let base = opts.results_root.join(&config.dataset);
    let layout = Layout {
        performance: base.join("performance"),
        logs: base.join("logs"),
        weights: base.join("weights"),
    };
    let dataset = load_dataset(config, &opts.data_root)?;
    let graph = build_graph(&dataset, Split::Train)?;
    create_dir(&layout.performance)?;
    create_dir(&layout.logs)?;

    let stamp = opts.timestamp.format("%Y%m%d_%H%M%S");
    let results_path = layout.performance.join(results_file_name(config.top_k, &opts.timestamp));
    let run_log = layout.logs.join(format!("run_{stamp}.log"));
    let mut notes = Vec::new();
    if let Some(b) = &config.backend {
        notes.push(format!("backend {b:?} ignored: training runs in-process"));
    }
    if !dataset.has_validation() {
        notes.push("no validation split: model selection uses the test split".to_string());
    }
    let mut log = String::new();
    for n in &notes {
        let _ = writeln!(log, "note: {n}");
    }
    let _ = writeln!(
        log,
        "dataset {}: {} users, {} items, {} train / {} test interactions",
        config.dataset,
        dataset.num_users,
        dataset.num_items,
        dataset.train.len(),
        dataset.test.len()
    );

    let mut rows = Vec::new();
    let mut selected = Vec::new();
    for model in &config.models {
        match run_model(model, config, &dataset, &graph, &layout, &mut log) {
            Ok((row, label)) => {
                let _ = writeln!(log, "{}: selected [{label}]", row.model);
                rows.push(row);
                selected.push(label);
            }
            Err(source) => {
                let _ = writeln!(log, "{} failed: {source}", model.tag);
                let partial = write_results_file(&results_path, &rows).ok().map(|_| results_path.clone());
                let _ = writeln!(
                    log,
                    "note: partial results ({} of {} models) in {}",
                    rows.len(),
                    config.models.len(),
                    results_path.display()
                );
                let _ = fs::write(&run_log, &log);
                return Err(RunError {
                    source,
                    model: Some(model.tag.clone()),
                    partial_results: partial,
                });
            }
        }
    }
    write_results_file(&results_path, &rows)?;
    fs::write(&run_log, &log).map_err(|e| Error::io(&run_log, e))?;
    Ok(RunSummary {
        results_path,
        rows,
        selected,
        notes,
    })
}
