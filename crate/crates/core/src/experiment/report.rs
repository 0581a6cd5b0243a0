use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{expect_header, fields, read_text, write_text};
use crate::error::{Error, Result};

const RESULTS_HEADER: [&str; 3] = ["model", "Recall", "nDCG"];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsFile {
    pub dataset: String,
    pub path: PathBuf,
    pub rows: Vec<ResultRow>,
}

/// `model<TAB>Recall<TAB>nDCG` then one row per model, full precision.
pub fn write_results_file(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut out = RESULTS_HEADER.join("\t");
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}\t{}\t{}", r.model, r.recall, r.ndcg);
    }
    write_text(path, &out)
}

/// Reads a results file. The dataset name is taken from the directory
/// layout `<dataset>/performance/<file>`.
pub fn read_results_file(path: &Path) -> Result<ResultsFile> {
    let text = read_text(path)?;
    let rows = expect_header(path, &text, &RESULTS_HEADER)?
        .into_iter()
        .map(|(n, line)| {
            let f = fields(line);
            if f.len() != 3 {
                return Err(Error::parse(path, n, format!("expected 3 columns, found {}", f.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::parse(path, n, format!("{s:?} is not a number")))
            };
            Ok(ResultRow {
                model: f[0].to_string(),
                recall: num(f[1])?,
                ndcg: num(f[2])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = path
        .parent()
        .filter(|p| p.file_name().is_some_and(|n| n == "performance"))
        .and_then(Path::parent)
        .and_then(Path::file_name)
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".to_string());
    Ok(ResultsFile {
        dataset,
        path: path.to_path_buf(),
        rows,
    })
}

/// Markdown table of models x (Recall, nDCG) per dataset. Per column the
/// best value is bold and the second best underlined; values are shown to
/// four decimals and missing cells as `---`. When several files cover the
/// same dataset, later files override earlier rows for the same model.
pub fn report_table(files: &[ResultsFile]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    let mut models: Vec<&str> = Vec::new();
    for f in files {
        if !datasets.contains(&f.dataset.as_str()) {
            datasets.push(&f.dataset);
        }
        for r in &f.rows {
            if !models.contains(&r.model.as_str()) {
                models.push(&r.model);
            }
        }
    }
    let lookup = |dataset: &str, model: &str| {
        files
            .iter()
            .rev()
            .filter(|f| f.dataset == dataset)
            .find_map(|f| f.rows.iter().find(|r| r.model == model))
    };
    // columns: (dataset, recall?) -> per-model rounded values
    let mut columns: Vec<Vec<Option<f64>>> = Vec::new();
    for d in &datasets {
        for recall in [true, false] {
            columns.push(
                models
                    .iter()
                    .map(|m| {
                        lookup(d, m).map(|r| {
                            let v = if recall { r.recall } else { r.ndcg };
                            (v * 1e4).round() / 1e4
                        })
                    })
                    .collect(),
            );
        }
    }
    let mut out = String::from("| Model |");
    for d in &datasets {
        let _ = write!(out, " {d} Recall | {d} nDCG |");
    }
    out.push_str("\n|:--|");
    out.push_str(&"--:|".repeat(2 * datasets.len()));
    out.push('\n');
    for (row, m) in models.iter().enumerate() {
        let _ = write!(out, "| {m} |");
        for col in &columns {
            let present: Vec<f64> = col.iter().flatten().copied().collect();
            let best = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let second = present
                .iter()
                .copied()
                .filter(|v| *v < best)
                .fold(f64::NEG_INFINITY, f64::max);
            let cell = match col[row] {
                None => "---".to_string(),
                Some(v) if v == best => format!("**{v:.4}**"),
                Some(v) if v == second => format!("<u>{v:.4}</u>"),
                Some(v) => format!("{v:.4}"),
            };
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    out
}
