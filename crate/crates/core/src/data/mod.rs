//! On-disk interaction formats.
//!
//! Input side: `user_list.txt` / `item_list.txt` ID maps (tab-separated,
//! header `org_id<TAB>remap_id`) and header-less ragged interaction files
//! (`train.txt`, `test.txt`, optional `val.txt`), one row per user holding
//! the user index followed by every item index.
//!
//! Output side: the seven benchmark files written by [`convert_for_benchmark`].
//!
//! Writers emit LF, tab separators and no trailing whitespace. Readers
//! accept CRLF, skip blank lines and split on tabs or runs of spaces.

mod convert;
mod synth;

pub use convert::{
    convert_for_benchmark, read_elliot, read_elliot_dataset, read_entity_table, read_list_table,
    read_target_table, write_elliot, write_entity_table, write_list_table, write_target_table, BENCHMARK_FILES,
    DUMMY_TIMESTAMP,
};
pub use synth::{generate_synthetic, SynthConfig};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dataset::{IdMap, InteractionDataset, Split};
use crate::error::{Error, Result};

pub const USER_LIST: &str = "user_list.txt";
pub const ITEM_LIST: &str = "item_list.txt";
pub const TRAIN_FILE: &str = "train.txt";
pub const TEST_FILE: &str = "test.txt";
pub const VAL_FILE: &str = "val.txt";

const ID_MAP_HEADER: [&str; 2] = ["org_id", "remap_id"];

pub(crate) fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::parse(path, 1, format!("not UTF-8: {e}")))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based numbers, `\r` stripped.
pub(crate) fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .enumerate()
        .map(|(k, l)| (k + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Splits on tabs when the line has any, otherwise on whitespace.
pub(crate) fn fields(line: &str) -> Vec<&str> {
    if line.contains('\t') {
        line.split('\t').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

pub(crate) fn parse_index(path: &Path, line: usize, what: &str, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::parse(path, line, format!("{what} {s:?} is not a non-negative integer")))
}

/// Checks the header row; returns the remaining numbered lines.
pub(crate) fn expect_header<'a>(
    path: &Path,
    text: &'a str,
    header: &[&str],
) -> Result<Vec<(usize, &'a str)>> {
    let mut lines = numbered_lines(text);
    match lines.next() {
        Some((n, l)) if fields(l) != header => Err(Error::parse(
            path,
            n,
            format!("expected header {:?}, found {l:?}", header.join("\t")),
        )),
        Some(_) => Ok(lines.collect()),
        None => Err(Error::parse(path, 1, "empty file (missing header)")),
    }
}

pub fn read_id_map(path: &Path) -> Result<IdMap> {
    let text = read_text(path)?;
    let mut ids = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for (n, line) in expect_header(path, &text, &ID_MAP_HEADER)? {
        let f = fields(line);
        if f.len() != 2 {
            return Err(Error::parse(path, n, format!("expected 2 columns, found {}", f.len())));
        }
        let remap = parse_index(path, n, "remap_id", f[1])?;
        if remap != ids.len() {
            return Err(Error::parse(
                path,
                n,
                format!("remap_id {remap} is not contiguous (expected {})", ids.len()),
            ));
        }
        if let Some(first) = seen.insert(f[0].to_string(), n) {
            return Err(Error::parse(
                path,
                n,
                format!("duplicate org_id {:?} (first on line {first})", f[0]),
            ));
        }
        ids.push(f[0].to_string());
    }
    IdMap::new(ids)
}

pub fn write_id_map(path: &Path, map: &IdMap) -> Result<()> {
    let mut out = ID_MAP_HEADER.join("\t");
    out.push('\n');
    for (remap, org) in map.iter() {
        let _ = writeln!(out, "{org}\t{remap}");
    }
    write_text(path, &out)
}

/// Reads a ragged file into `(user, item)` pairs, bounds-checked against
/// the ID map sizes.
pub fn read_ragged(path: &Path, num_users: usize, num_items: usize) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut edges = Vec::new();
    for (n, line) in numbered_lines(&text) {
        let mut f = fields(line).into_iter().filter(|s| !s.is_empty());
        let u = parse_index(path, n, "user", f.next().expect("line is not blank"))?;
        if u >= num_users {
            return Err(Error::parse(
                path,
                n,
                format!("user {u} out of range (user_list has {num_users} rows)"),
            ));
        }
        for s in f {
            let i = parse_index(path, n, "item", s)?;
            if i >= num_items {
                return Err(Error::parse(
                    path,
                    n,
                    format!("item {i} out of range (item_list has {num_items} rows)"),
                ));
            }
            edges.push((u, i));
        }
    }
    Ok(edges)
}

/// One row per user `0..num_users`, including users with no items.
pub fn write_ragged(path: &Path, num_users: usize, edges: &[(usize, usize)]) -> Result<()> {
    let mut rows = vec![Vec::new(); num_users];
    for &(u, i) in edges {
        rows[u].push(i);
    }
    let mut out = String::new();
    for (u, items) in rows.iter_mut().enumerate() {
        items.sort_unstable();
        items.dedup();
        let _ = write!(out, "{u}");
        for i in items.iter() {
            let _ = write!(out, "\t{i}");
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Loads `user_list.txt`, `item_list.txt`, `train.txt`, `test.txt` and,
/// when present, `val.txt` from `dir`.
pub fn read_dataset(dir: &Path) -> Result<InteractionDataset> {
    let users = read_id_map(&dir.join(USER_LIST))?;
    let items = read_id_map(&dir.join(ITEM_LIST))?;
    let (nu, ni) = (users.len(), items.len());
    let train = read_ragged(&dir.join(TRAIN_FILE), nu, ni)?;
    let test = read_ragged(&dir.join(TEST_FILE), nu, ni)?;
    let val_path = dir.join(VAL_FILE);
    let val = if val_path.exists() {
        Some(read_ragged(&val_path, nu, ni)?)
    } else {
        None
    };
    InteractionDataset::new(users, items, train, test, val)
        .map_err(|e| Error::Dataset(format!("{}: {e}", dir.display())))
}

pub fn write_dataset(dir: &Path, dataset: &InteractionDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_id_map(&dir.join(USER_LIST), &dataset.user_ids)?;
    write_id_map(&dir.join(ITEM_LIST), &dataset.item_ids)?;
    write_ragged(&dir.join(TRAIN_FILE), dataset.num_users, &dataset.train)?;
    write_ragged(&dir.join(TEST_FILE), dataset.num_users, &dataset.test)?;
    if dataset.val.is_some() {
        write_ragged(&dir.join(VAL_FILE), dataset.num_users, &dataset.edges(Split::Validation))?;
    }
    Ok(())
}
