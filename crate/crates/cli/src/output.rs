//! Run bundles: CSV tables plus a JSON manifest, written atomically.

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Bumped whenever a column is renamed, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Self { name, columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.into_error()))
    }
}

/// Shortest representation that parses back to the same f64.
pub fn f(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    /// `data.csv` is always the first table.
    pub tables: Vec<Table>,
    pub results: Value,
}

#[derive(Debug, Serialize)]
struct FileEntry<'a> {
    file: String,
    schema_version: u32,
    columns: &'a [&'static str],
    rows: usize,
}

pub fn manifest(cfg: &ExperimentConfig, bundle: &Bundle, wall: Duration) -> Value {
    let files: Vec<FileEntry> = bundle
        .tables
        .iter()
        .map(|t| FileEntry { file: format!("{}.csv", t.name), schema_version: SCHEMA_VERSION, columns: &t.columns, rows: t.rows.len() })
        .collect();
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    json!({
        "experiment": cfg.experiment.name(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "config": cfg,
        "code_version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": wall.as_secs_f64(),
        "created_unix": created,
        "files": files,
        "results": bundle.results,
    })
}

/// Writes every table and the manifest into a fresh sibling directory, then
/// swaps it into `dir`. On failure `dir` is left as it was.
pub fn write_atomic(dir: &Path, bundle: &Bundle, manifest: &Value) -> Result<PathBuf, CliError> {
    let parent = dir.parent().ok_or_else(|| CliError::Config(format!("{} has no parent", dir.display())))?;
    std::fs::create_dir_all(parent)?;
    let staging = tempfile::Builder::new().prefix(".staging-").tempdir_in(parent)?;
    for t in &bundle.tables {
        std::fs::write(staging.path().join(format!("{}.csv", t.name)), t.to_csv()?)?;
    }
    let text = serde_json::to_string_pretty(manifest).expect("manifest always serializes");
    std::fs::write(staging.path().join("manifest.json"), text + "\n")?;
    let staged = staging.keep();
    if dir.exists() {
        let old = tempfile::Builder::new().prefix(".old-").tempdir_in(parent)?.keep();
        std::fs::remove_dir(&old)?;
        std::fs::rename(dir, &old)?;
        if let Err(e) = std::fs::rename(&staged, dir) {
            let _ = std::fs::rename(&old, dir);
            let _ = std::fs::remove_dir_all(&staged);
            return Err(e.into());
        }
        std::fs::remove_dir_all(&old)?;
    } else if let Err(e) = std::fs::rename(&staged, dir) {
        let _ = std::fs::remove_dir_all(&staged);
        return Err(e.into());
    }
    Ok(dir.to_path_buf())
}
