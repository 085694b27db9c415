//! Output writing: JSON documents, RFC-4180 CSV tables with a fixed
//! 17-significant-digit float format, and the run manifest with per-file
//! SHA-256 digests. Every payload is validated (re-parsed) before the
//! write is considered complete.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

/// 17 significant digits: round-trips every f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return String::new(); // empty CSV field for missing values
    }
    format!("{x:.16e}")
}

/// RFC-4180 quoting for text fields.
pub fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub struct CsvTable {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn render(&self) -> Result<String, String> {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(format!(
                    "row {i} has {} fields, expected {}",
                    row.len(),
                    self.columns.len()
                ));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Snapshot of a finished run: configuration, seed, wall-clock bounds and
/// the digest of every emitted payload file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub tool_version: String,
    pub command: String,
    pub master_seed: u64,
    pub config: toml::Value,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<OutputDigest>,
}

pub struct Emitter {
    dir: PathBuf,
    started: u128,
    outputs: Vec<OutputDigest>,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl Emitter {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            started: now_ms(),
            outputs: Vec::new(),
        })
    }

    fn record(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        let digest = hasher.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.outputs.push(OutputDigest {
            path: name.to_string(),
            sha256: hex,
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Serialize, validate by re-parsing, then write.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), String> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| e.to_string())?;
        bytes.push(b'\n');
        serde_json::from_slice::<serde_json::Value>(&bytes)
            .map_err(|e| format!("json validation failed for {name}: {e}"))?;
        self.record(name, &bytes).map_err(|e| e.to_string())
    }

    /// Render, validate shape, then write.
    pub fn write_csv(&mut self, name: &str, table: &CsvTable) -> Result<(), String> {
        let text = table.render()?;
        // validation: constant column count on re-parse (quoted fields are
        // produced only in the trailing error column, which never contains
        // a line break from our writers)
        for (i, line) in text.lines().enumerate().skip(1) {
            if !line.is_empty() && field_count(line) != table.columns.len() {
                return Err(format!("csv validation failed for {name} at row {i}"));
            }
        }
        self.record(name, text.as_bytes()).map_err(|e| e.to_string())
    }

    /// Plain text payload (matrix dumps); still digested.
    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), String> {
        self.record(name, text.as_bytes()).map_err(|e| e.to_string())
    }

    pub fn write_manifest(
        &mut self,
        command: &str,
        master_seed: u64,
        config: toml::Value,
    ) -> Result<(), String> {
        let manifest = RunManifest {
            schema: "rmtlab.manifest.v1".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.to_string(),
            master_seed,
            config,
            started_unix_ms: self.started,
            finished_unix_ms: now_ms(),
            outputs: self.outputs.clone(),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| e.to_string())?;
        bytes.push(b'\n');
        std::fs::write(self.dir.join("manifest.json"), bytes).map_err(|e| e.to_string())
    }
}

fn field_count(line: &str) -> usize {
    let mut count = 1;
    let mut in_quotes = false;
    for c in line.chars() {
        match c {
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => count += 1,
            _ => {}
        }
    }
    count
}
