use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::rates::{AggregateRow, RateResult, RateRow, SlopeFit};
use crate::error::{Error, Result};

pub const ROWS_FILE: &str = "rows.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const DETAILS_FILE: &str = "details.json";
pub const METADATA_FILE: &str = "metadata.json";

pub const ROW_HEADER: [&str; 6] = ["n", "seed", "gap", "slope_step_residual_max", "lambda", "runtime_s"];
const AGGREGATE_HEADER: [&str; 5] = ["n", "median_gap", "q25_gap", "q75_gap", "cells"];

/// Hash of `content` in the style of a git blob object (`"blob {len}\0"` prefix), with
/// SHA-256.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub config: Option<ExperimentConfig>,
    /// [`content_hash`] of the config as TOML.
    pub input_hash: Option<String>,
    pub kappa: Option<f64>,
    pub slope: Option<SlopeFit>,
    pub cells: usize,
    pub failed_cells: usize,
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    if r.headers()?.iter().ne(header.iter().copied()) {
        return Err(Error::Parse(format!("{}: unexpected header", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value)?;
    fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
}

/// Writes rows, aggregate, per-cell details and run metadata into directory `dir`.
pub fn write_results(result: &RateResult, config: Option<&ExperimentConfig>, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths: Vec<PathBuf> = [ROWS_FILE, AGGREGATE_FILE, DETAILS_FILE, METADATA_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    write_csv(&paths[0], &ROW_HEADER, &result.rows)?;
    write_csv(&paths[1], &AGGREGATE_HEADER, &result.aggregate)?;
    write_json(&paths[2], &result.details)?;
    let input_hash = match config {
        Some(c) => Some(content_hash(c.to_toml()?.as_bytes())),
        None => None,
    };
    let meta = RunMetadata {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.cloned(),
        input_hash,
        kappa: result.kappa,
        slope: result.slope,
        cells: result.rows.len(),
        failed_cells: result.rows.iter().filter(|r| !r.gap.is_finite()).count(),
    };
    write_json(&paths[3], &meta)?;
    Ok(paths)
}

/// Rows file written by [`write_results`].
pub fn read_rows(path: &Path) -> Result<Vec<RateRow>> {
    read_csv(path, &ROW_HEADER)
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    read_csv(path, &AGGREGATE_HEADER)
}

pub fn read_metadata(path: &Path) -> Result<RunMetadata> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}
