mod common;

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use common::*;
use gravel_core::data::SynthConfig;
use gravel_core::experiment::{parse_config, read_results_file, run_experiment, RunOptions};

fn opts(data_root: &Path, results_root: &Path, second: u32) -> RunOptions {
    RunOptions {
        data_root: data_root.to_path_buf(),
        results_root: results_root.to_path_buf(),
        timestamp: NaiveDate::from_ymd_opt(2025, 1, 2).unwrap().and_hms_opt(3, 4, second).unwrap(),
    }
}

fn small(users: usize, items: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        users,
        items,
        blocks: 2,
        in_density: 0.3,
        cross_density: 0.02,
        test_fraction: 0.2,
        seed,
    }
}

const TRAINED_MODELS: &str = "  models:
    external.ContextGNN:
      meta:
        save_weights: True
        validation_rate: 2
      lr: 0.01
      epochs: 3
      factors: 8
      channels: 8
      batch_size: 32
      n_layers: 2
      neigh: (4,4)
      max_steps: 12
      seed: 5
    MFBPR:
      meta:
        save_weights: True
      lr: [0.01, 0.05]
      epochs: 4
      factors: 8
      batch_size: 32
";

#[test]
fn two_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synthetic_bench(root, "toy", &small(24, 30, 1));
    let cfg = parse_config(&(config_head("toy") + TRAINED_MODELS)).unwrap();
    let a = run_experiment(&cfg, &opts(root, &root.join("ra"), 0)).unwrap();
    let b = run_experiment(&cfg, &opts(root, &root.join("rb"), 59)).unwrap();
    assert_ne!(a.results_path.file_name(), b.results_path.file_name());
    assert_eq!(fs::read(&a.results_path).unwrap(), fs::read(&b.results_path).unwrap());
    assert_eq!(a.rows.len(), 2);
    assert_eq!(a.selected, b.selected);
    for w in ["ContextGNN.grvl", "MFBPR.grvl"] {
        let wa = fs::read(root.join("ra/toy/weights").join(w)).unwrap();
        let wb = fs::read(root.join("rb/toy/weights").join(w)).unwrap();
        assert!(!wa.is_empty());
        assert_eq!(wa, wb, "{w}");
    }
    // training logs: one per trained grid point
    let logs: Vec<_> = list_files(&root.join("ra/toy/logs"));
    for name in ["ContextGNN.tsv", "MFBPR_0.tsv", "MFBPR_1.tsv"] {
        assert!(logs.iter().any(|p| p.ends_with(name)), "{logs:?}");
    }
}

#[test]
fn filter_only_config_writes_one_row_and_no_training_log() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synthetic_bench(root, "tiny", &small(10, 12, 2));
    let text = config_head("tiny") + "  models:\n    ItemFilter:\n      smoothing: 0.5\n";
    let cfg = parse_config(&text).unwrap();
    let s = run_experiment(&cfg, &opts(root, &root.join("results"), 0)).unwrap();
    assert_eq!(s.rows.len(), 1);
    let back = read_results_file(&s.results_path).unwrap();
    assert_eq!(back.dataset, "tiny");
    assert_eq!(back.rows, s.rows);
    let logs = list_files(&root.join("results/tiny/logs"));
    assert_eq!(logs.len(), 1, "{logs:?}");
    assert!(logs[0].to_string_lossy().starts_with("run_"));
    let name = s.results_path.file_name().unwrap().to_string_lossy().into_owned();
    assert_eq!(name, "rec_cutoff_20_relthreshold_0_20250102_030400.tsv");
}

#[test]
fn runs_write_only_under_results_root() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synthetic_bench(root, "toy", &small(16, 20, 3));
    let before = list_files(root);
    let cfg = parse_config(&(config_head("toy") + TRAINED_MODELS)).unwrap();
    run_experiment(&cfg, &opts(root, &root.join("out"), 0)).unwrap();
    let after: Vec<_> = list_files(root)
        .into_iter()
        .filter(|p| !p.starts_with("out"))
        .collect();
    assert_eq!(before, after);
}

#[test]
fn restore_reuses_saved_weights() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synthetic_bench(root, "toy", &small(16, 20, 4));
    let body = "  models:\n    MFBPR:\n      meta:\n        save_weights: True\n      lr: 0.05\n      epochs: 3\n      factors: 4\n";
    let cfg = parse_config(&(config_head("toy") + body)).unwrap();
    let results = root.join("r");
    let first = run_experiment(&cfg, &opts(root, &results, 0)).unwrap();
    let restored = parse_config(&(config_head("toy") + &body.replace("save_weights: True", "restore: True"))).unwrap();
    let second = run_experiment(&restored, &opts(root, &results, 1)).unwrap();
    assert_eq!(first.rows, second.rows);
}

#[test]
fn failure_keeps_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synthetic_bench(root, "toy", &small(16, 20, 5));
    let results = root.join("r");
    let weights = results.join("toy/weights");
    fs::create_dir_all(&weights).unwrap();
    fs::write(weights.join("MFBPR.grvl"), b"not a checkpoint").unwrap();
    let body = "  models:\n    ItemFilter:\n      smoothing: 0.5\n    MFBPR:\n      meta:\n        restore: True\n      factors: 4\n";
    let cfg = parse_config(&(config_head("toy") + body)).unwrap();
    let err = run_experiment(&cfg, &opts(root, &results, 0)).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    let partial = err.partial_results.expect("partial results written");
    assert_eq!(read_results_file(&partial).unwrap().rows.len(), 1);
}

#[test]
fn missing_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&(config_head("absent") + "  models:\n    ItemFilter:\n      smoothing: 0.5\n")).unwrap();
    let err = run_experiment(&cfg, &opts(dir.path(), &dir.path().join("r"), 0)).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}
