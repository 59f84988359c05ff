// SPDX-License-Identifier: Apache-2.0

//! Result files: CSV tables with JSON provenance sidecars, written
//! atomically via a temporary file in the destination directory.
//!
//! Floats are written in Rust's shortest round-trip form, so a table read
//! back and rewritten is bitwise identical. Run-dependent metadata (wall
//! time, timestamp) lives only in the sidecars.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::CliError;

pub const TOOL: &str = "urc";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn parse_f64(s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("not a number: '{s}'")))
}

/// Writes `bytes` to `path` by renaming a fully written temporary file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent)?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

/// Identity of the configuration(s) that produced a table.
#[derive(Debug, Clone)]
pub struct Provenance {
    /// `(experiment name, config hash, model hash)` per contributing run.
    pub runs: Vec<(String, String, String)>,
    pub seed: u64,
}

impl Provenance {
    pub fn to_json(&self) -> Value {
        let runs: Vec<Value> = self
            .runs
            .iter()
            .map(|(n, c, m)| json!({"name": n, "config_hash": c, "model_hash": m}))
            .collect();
        json!({
            "tool": TOOL,
            "version": VERSION,
            "seed": self.seed,
            "runs": runs,
            "timestamp": chrono::Utc::now().to_rfc3339(),
        })
    }
}

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| CliError::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }
}

/// Writes `dir/name` and `dir/name.json`; `extra` is merged into the sidecar.
pub fn write_table(dir: &Path, name: &str, table: &Table, prov: &Provenance, extra: Value) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    atomic_write(&path, &table.to_csv()?)?;
    let mut meta = prov.to_json();
    meta["table"] = json!(name);
    meta["columns"] = json!(table.header);
    meta["rows"] = json!(table.rows.len());
    if let (Some(m), Value::Object(e)) = (meta.as_object_mut(), extra) {
        m.extend(e);
    }
    let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Io(e.to_string()))?;
    atomic_write(&sidecar_path(&path), text.as_bytes())?;
    Ok(path)
}

pub fn sidecar_path(table: &Path) -> PathBuf {
    let mut s = table.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn read_sidecar(table: &Path) -> Result<Value, CliError> {
    let path = sidecar_path(table);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Header and rows of a CSV table.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let header = r
        .headers()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|r| r.iter().map(String::from).collect())
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<Vec<String>>, CliError>>()?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.0, -0.0, 1.0, 0.1, 1e-300, 2.5e17, std::f64::consts::PI, -1.234_567_890_123_456_7e-9] {
            assert_eq!(parse_f64(&fmt_f64(x)).unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn table_and_sidecar_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), fmt_f64(0.5)]);
        let prov = Provenance {
            runs: vec![("x".into(), "h".into(), "m".into())],
            seed: 7,
        };
        let p = write_table(dir.path(), "t.csv", &t, &prov, json!({"extra": 1})).unwrap();
        let (h, rows) = read_table(&p).unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(rows, vec![vec!["1".to_string(), "0.5".to_string()]]);
        let meta = read_sidecar(&p).unwrap();
        assert_eq!(meta["seed"], 7);
        assert_eq!(meta["extra"], 1);
        assert_eq!(meta["runs"][0]["config_hash"], "h");
        let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 2);
    }
}
