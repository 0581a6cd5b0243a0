//! The seven tab-separated files consumed by the benchmark harness and the
//! relational loader, plus readers for each of them.
//!
//! ```text
//! train_elliot.tsv, test_elliot.tsv   user<TAB>item            (no header)
//! src_df.tsv                          user_id<TAB>timestamp
//! dst_df.tsv                          item_id<TAB>timestamp
//! train_df.tsv, test_df.tsv           user_id<TAB>item_ids<TAB>timestamp
//!                                     item_ids space-separated; users with
//!                                     no items in the split are omitted
//! target_table.tsv                    user_id<TAB>item_id<TAB>timestamp
//!                                     (train interactions)
//! ```
//!
//! All IDs are remapped indices and every timestamp is the literal `0`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{expect_header, fields, numbered_lines, parse_index, read_text, write_text};
use crate::dataset::{IdMap, InteractionDataset};
use crate::error::{Error, Result};

pub const DUMMY_TIMESTAMP: u64 = 0;

pub const BENCHMARK_FILES: [&str; 7] = [
    "train_elliot.tsv",
    "test_elliot.tsv",
    "src_df.tsv",
    "dst_df.tsv",
    "train_df.tsv",
    "test_df.tsv",
    "target_table.tsv",
];

const LIST_HEADER: [&str; 3] = ["user_id", "item_ids", "timestamp"];
const TARGET_HEADER: [&str; 3] = ["user_id", "item_id", "timestamp"];

fn check_columns(path: &Path, n: usize, f: &[&str], want: usize) -> Result<()> {
    if f.len() != want {
        return Err(Error::parse(path, n, format!("expected {want} columns, found {}", f.len())));
    }
    Ok(())
}

fn check_timestamp(path: &Path, n: usize, s: &str) -> Result<()> {
    s.parse::<i64>()
        .map(|_| ())
        .map_err(|_| Error::parse(path, n, format!("timestamp {s:?} is not an integer")))
}

pub fn write_elliot(path: &Path, edges: &[(usize, usize)]) -> Result<()> {
    let mut out = String::new();
    for (u, i) in edges {
        let _ = writeln!(out, "{u}\t{i}");
    }
    write_text(path, &out)
}

pub fn read_elliot(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    numbered_lines(&text)
        .map(|(n, line)| {
            let f = fields(line);
            check_columns(path, n, &f, 2)?;
            Ok((parse_index(path, n, "user", f[0])?, parse_index(path, n, "item", f[1])?))
        })
        .collect()
}

/// `src_df` / `dst_df`: one row per entity with header `<column><TAB>timestamp`.
pub fn write_entity_table(path: &Path, column: &str, count: usize) -> Result<()> {
    let mut out = format!("{column}\ttimestamp\n");
    for k in 0..count {
        let _ = writeln!(out, "{k}\t{DUMMY_TIMESTAMP}");
    }
    write_text(path, &out)
}

pub fn read_entity_table(path: &Path, column: &str) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    expect_header(path, &text, &[column, "timestamp"])?
        .into_iter()
        .map(|(n, line)| {
            let f = fields(line);
            check_columns(path, n, &f, 2)?;
            check_timestamp(path, n, f[1])?;
            parse_index(path, n, column, f[0])
        })
        .collect()
}

/// `train_df` / `test_df`: users with at least one item, ascending.
pub fn write_list_table(path: &Path, num_users: usize, edges: &[(usize, usize)]) -> Result<()> {
    let mut rows = vec![Vec::new(); num_users];
    for &(u, i) in edges {
        rows[u].push(i);
    }
    let mut out = LIST_HEADER.join("\t");
    out.push('\n');
    for (u, items) in rows.iter_mut().enumerate().filter(|(_, r)| !r.is_empty()) {
        items.sort_unstable();
        items.dedup();
        let list: Vec<String> = items.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{u}\t{}\t{DUMMY_TIMESTAMP}", list.join(" "));
    }
    write_text(path, &out)
}

pub fn read_list_table(path: &Path) -> Result<Vec<(usize, Vec<usize>)>> {
    let text = read_text(path)?;
    expect_header(path, &text, &LIST_HEADER)?
        .into_iter()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            check_columns(path, n, &f, 3)?;
            check_timestamp(path, n, f[2].trim())?;
            let u = parse_index(path, n, "user_id", f[0].trim())?;
            let items = f[1]
                .split_whitespace()
                .map(|s| parse_index(path, n, "item", s))
                .collect::<Result<Vec<_>>>()?;
            Ok((u, items))
        })
        .collect()
}

pub fn write_target_table(path: &Path, edges: &[(usize, usize)]) -> Result<()> {
    let mut out = TARGET_HEADER.join("\t");
    out.push('\n');
    for (u, i) in edges {
        let _ = writeln!(out, "{u}\t{i}\t{DUMMY_TIMESTAMP}");
    }
    write_text(path, &out)
}

pub fn read_target_table(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    expect_header(path, &text, &TARGET_HEADER)?
        .into_iter()
        .map(|(n, line)| {
            let f = fields(line);
            check_columns(path, n, &f, 3)?;
            check_timestamp(path, n, f[2])?;
            Ok((parse_index(path, n, "user_id", f[0])?, parse_index(path, n, "item_id", f[1])?))
        })
        .collect()
}

/// Writes all seven files of [`BENCHMARK_FILES`] into `out_dir`.
pub fn convert_for_benchmark(dataset: &InteractionDataset, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let p = |name: &str| out_dir.join(name);
    write_elliot(&p("train_elliot.tsv"), &dataset.train)?;
    write_elliot(&p("test_elliot.tsv"), &dataset.test)?;
    write_entity_table(&p("src_df.tsv"), "user_id", dataset.num_users)?;
    write_entity_table(&p("dst_df.tsv"), "item_id", dataset.num_items)?;
    write_list_table(&p("train_df.tsv"), dataset.num_users, &dataset.train)?;
    write_list_table(&p("test_df.tsv"), dataset.num_users, &dataset.test)?;
    write_target_table(&p("target_table.tsv"), &dataset.train)
}

/// Dataset from a pair of two-column interaction files. Indices are taken
/// as-is; the universe is sized by the largest index seen in either file.
pub fn read_elliot_dataset(train_path: &Path, test_path: &Path) -> Result<InteractionDataset> {
    let train = read_elliot(train_path)?;
    let test = read_elliot(test_path)?;
    let all = train.iter().chain(&test);
    let nu = all.clone().map(|e| e.0 + 1).max().unwrap_or(0);
    let ni = all.map(|e| e.1 + 1).max().unwrap_or(0);
    InteractionDataset::new(IdMap::identity(nu), IdMap::identity(ni), train, test, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> InteractionDataset {
        InteractionDataset::from_indices(3, 4, vec![(0, 0), (0, 3), (2, 1)], vec![(0, 1), (2, 2)]).unwrap()
    }

    #[test]
    fn single_user_two_items() {
        let dir = tempfile::tempdir().unwrap();
        let d = InteractionDataset::from_indices(1, 3, vec![(0, 0), (0, 1)], vec![(0, 2)]).unwrap();
        convert_for_benchmark(&d, dir.path()).unwrap();
        let text = read_text(&dir.path().join("train_elliot.tsv")).unwrap();
        assert_eq!(text, "0\t0\n0\t1\n");
    }

    #[test]
    fn exact_bytes() {
        let dir = tempfile::tempdir().unwrap();
        convert_for_benchmark(&sample(), dir.path()).unwrap();
        let f = |n: &str| read_text(&dir.path().join(n)).unwrap();
        assert_eq!(f("src_df.tsv"), "user_id\ttimestamp\n0\t0\n1\t0\n2\t0\n");
        assert_eq!(f("dst_df.tsv"), "item_id\ttimestamp\n0\t0\n1\t0\n2\t0\n3\t0\n");
        assert_eq!(f("train_df.tsv"), "user_id\titem_ids\ttimestamp\n0\t0 3\t0\n2\t1\t0\n");
        assert_eq!(f("test_df.tsv"), "user_id\titem_ids\ttimestamp\n0\t1\t0\n2\t2\t0\n");
        assert_eq!(
            f("target_table.tsv"),
            "user_id\titem_id\ttimestamp\n0\t0\t0\n0\t3\t0\n2\t1\t0\n"
        );
    }

    #[test]
    fn readers_invert_writers() {
        let dir = tempfile::tempdir().unwrap();
        let d = sample();
        convert_for_benchmark(&d, dir.path()).unwrap();
        let p = |n: &str| dir.path().join(n);
        assert_eq!(read_elliot(&p("train_elliot.tsv")).unwrap(), d.train);
        assert_eq!(read_target_table(&p("target_table.tsv")).unwrap(), d.train);
        assert_eq!(read_entity_table(&p("src_df.tsv"), "user_id").unwrap(), vec![0, 1, 2]);
        assert_eq!(
            read_list_table(&p("train_df.tsv")).unwrap(),
            vec![(0, vec![0, 3]), (2, vec![1])]
        );
        let back = read_elliot_dataset(&p("train_elliot.tsv"), &p("test_elliot.tsv")).unwrap();
        assert_eq!((back.train.clone(), back.test.clone()), (d.train, d.test));
    }

    #[test]
    fn malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tsv");
        write_text(&p, "user_id\titem_id\ttimestamp\n0\t1\tnoon\n").unwrap();
        let msg = read_target_table(&p).unwrap_err().to_string();
        assert!(msg.contains("t.tsv:2:"), "{msg}");
        write_text(&p, "0\t1\n2\n").unwrap();
        assert!(read_elliot(&p).unwrap_err().to_string().contains(":2:"));
    }
}
