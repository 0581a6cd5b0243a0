//! `gravel`: run experiments, convert datasets, generate synthetic data
//! and render result tables.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gravel_core::data::{convert_for_benchmark, generate_synthetic, read_dataset, write_dataset, SynthConfig};
use gravel_core::experiment::{parse_config, read_results_file, report_table, run_experiment, RunOptions};
use gravel_core::Error;

#[derive(Parser)]
#[command(name = "gravel", version, about = "Graph recommendation benchmarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, select and evaluate the models of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's dataset name.
        #[arg(long)]
        dataset: Option<String>,
        /// Run only this model (tag or bare name).
        #[arg(long)]
        model: Option<String>,
        /// Base for relative data paths [default: the config's directory].
        #[arg(long)]
        data_root: Option<PathBuf>,
        /// Output root [default: $GRAVEL_RESULTS_ROOT, else ./results].
        #[arg(long)]
        results_root: Option<PathBuf>,
    },
    /// Write the seven benchmark tsv files for a dataset directory.
    Convert {
        /// Directory with user_list.txt, item_list.txt, train.txt, test.txt.
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory [default: the dataset directory].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a markdown table from results files.
    Report {
        /// Glob over results files, e.g. 'results/*/performance/*.tsv'.
        #[arg(long)]
        results: String,
    },
    /// Generate a planted-block dataset (input files plus benchmark files).
    Synth {
        #[arg(long)]
        users: usize,
        #[arg(long)]
        items: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[arg(long, default_value_t = 0.25)]
        in_density: f64,
        #[arg(long, default_value_t = 0.01)]
        cross_density: f64,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn read_config(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            dataset,
            model,
            data_root,
            results_root,
        } => {
            let text = read_config(&config)?;
            let cfg = parse_config(&text)
                .and_then(|c| c.narrow(dataset.as_deref(), model.as_deref()))
                .map_err(|e| Failure {
                    code: e.exit_code() as u8,
                    message: format!("{}: {e}", config.display()),
                })?;
            let data_root = data_root.unwrap_or_else(|| {
                config
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            let results_root =
                results_root.unwrap_or_else(|| RunOptions::results_root_from_env(PathBuf::from("results")));
            let opts = RunOptions {
                data_root,
                results_root,
                timestamp: chrono::Local::now().naive_local(),
            };
            let summary = run_experiment(&cfg, &opts).map_err(|e| Failure {
                code: e.exit_code() as u8,
                message: e.to_string(),
            })?;
            for note in &summary.notes {
                eprintln!("note: {note}");
            }
            for (row, label) in summary.rows.iter().zip(&summary.selected) {
                println!("{}\tRecall={:.4}\tnDCG={:.4}\t[{label}]", row.model, row.recall, row.ndcg);
            }
            println!("{}", summary.results_path.display());
        }
        Command::Convert { dataset, out } => {
            let d = read_dataset(&dataset)?;
            let out = out.unwrap_or_else(|| dataset.clone());
            convert_for_benchmark(&d, &out)?;
            println!(
                "wrote benchmark files for {} users, {} items to {}",
                d.num_users,
                d.num_items,
                out.display()
            );
        }
        Command::Report { results } => {
            let paths = glob::glob(&results).map_err(|e| Failure {
                code: 2,
                message: format!("bad glob {results:?}: {e}"),
            })?;
            let mut files = Vec::new();
            for p in paths {
                let p = p.map_err(|e| Failure {
                    code: 3,
                    message: e.to_string(),
                })?;
                files.push(read_results_file(&p)?);
            }
            if files.is_empty() {
                return Err(Failure {
                    code: 3,
                    message: format!("no results files match {results:?}"),
                });
            }
            print!("{}", report_table(&files));
        }
        Command::Synth {
            users,
            items,
            seed,
            out,
            blocks,
            in_density,
            cross_density,
            test_fraction,
        } => {
            let d = generate_synthetic(&SynthConfig {
                users,
                items,
                blocks,
                in_density,
                cross_density,
                test_fraction,
                seed,
            })?;
            write_dataset(&out, &d)?;
            convert_for_benchmark(&d, &out)?;
            println!(
                "{} users, {} items, {} train / {} test interactions in {}",
                d.num_users,
                d.num_items,
                d.train.len(),
                d.test.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
