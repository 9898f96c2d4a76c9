//! Run records and their CSV / JSON persistence.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::ExperimentConfig;

/// Everything one run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub version: String,
    /// Flat key → number/string map, in the experiment's column order.
    pub results: Map<String, Value>,
    /// Per-level or per-step table, empty for single-row experiments.
    pub rows: Vec<Map<String, Value>>,
    pub regime: Map<String, Value>,
    /// estimate key → [predicted key, reference].
    pub comparisons: Map<String, Value>,
}

impl RunRecord {
    /// The part of the record that must repeat exactly under the same seed.
    pub fn payload(&self) -> (&Map<String, Value>, &Vec<Map<String, Value>>, &Map<String, Value>) {
        (&self.results, &self.rows, &self.regime)
    }

    /// Human-readable summary with each estimate next to its prediction.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.results {
            out.push_str(&format!("{k} = {}", show(v)));
            if let Some(Value::Array(c)) = self.comparisons.get(k) {
                if let (Some(Value::String(pk)), Some(Value::String(anchor))) = (c.first(), c.get(1)) {
                    let p = self.results.get(pk).map(show).unwrap_or_default();
                    out.push_str(&format!("    (predicted {p}; {anchor})"));
                }
            }
            out.push('\n');
        }
        for (k, v) in &self.regime {
            out.push_str(&format!("[{k}: {}]\n", show(v)));
        }
        if !self.rows.is_empty() {
            out.push_str(&format!("{} table rows\n", self.rows.len()));
        }
        out
    }
}

fn show(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// CSV cell text for a JSON value.
pub fn cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(v) => show(v),
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn table_csv(header: &[String], rows: &[Vec<String>]) -> std::io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))
}

fn map_csv(maps: &[Map<String, Value>]) -> std::io::Result<Vec<u8>> {
    let header: Vec<String> = maps.first().map(|m| m.keys().cloned().collect()).unwrap_or_default();
    let rows: Vec<Vec<String>> = maps.iter().map(|m| header.iter().map(|h| cell(m.get(h))).collect()).collect();
    table_csv(&header, &rows)
}

/// Writes `<name>.csv`, `<name>.json` and, with a table, `<name>_rows.csv`.
pub fn persist(record: &RunRecord, dir: &Path, name: &str) -> std::io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let csv_path = dir.join(format!("{name}.csv"));
    write_atomic(&csv_path, &map_csv(std::slice::from_ref(&record.results))?)?;
    written.push(csv_path);
    if !record.rows.is_empty() {
        let p = dir.join(format!("{name}_rows.csv"));
        write_atomic(&p, &map_csv(&record.rows)?)?;
        written.push(p);
    }
    let json_path = dir.join(format!("{name}.json"));
    let json = serde_json::to_vec_pretty(record).map_err(std::io::Error::other)?;
    write_atomic(&json_path, &json)?;
    written.push(json_path);
    Ok(written)
}
