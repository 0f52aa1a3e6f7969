//! Report envelopes, input hashing and artifact writing.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// SHA-256 over `"blob <len>\0" ++ bytes`, the git object layout.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub sha256_blob: String,
    pub bytes: usize,
}

/// Reads an input file, recording its hash under `role`.
pub fn read_input(path: &Path, role: &str, inputs: &mut Vec<InputRecord>) -> Result<Vec<u8>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    inputs.push(InputRecord {
        role: role.to_string(),
        sha256_blob: blob_hash(&bytes),
        bytes: bytes.len(),
    });
    Ok(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// A plain table for the per-trial CSV.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Everything one command produces.
pub struct Outcome {
    pub config: Value,
    pub inputs: Vec<InputRecord>,
    /// Provenance label per top-level result field.
    pub provenance: BTreeMap<String, &'static str>,
    pub verdict: Option<Verdict>,
    pub result: Value,
    pub table: Option<Table>,
}

impl Outcome {
    pub fn new(config: &impl Serialize, result: &impl Serialize) -> Result<Self, CliError> {
        Ok(Outcome {
            config: serde_json::to_value(config).map_err(CliError::serialize)?,
            inputs: Vec::new(),
            provenance: BTreeMap::new(),
            verdict: None,
            result: serde_json::to_value(result).map_err(CliError::serialize)?,
            table: None,
        })
    }

    pub fn provenance(mut self, entries: &[(&str, &'static str)]) -> Self {
        for (k, v) in entries {
            self.provenance.insert(k.to_string(), v);
        }
        self
    }

    pub fn verdict(mut self, pass: bool) -> Self {
        self.verdict = Some(Verdict::from_pass(pass));
        self
    }

    pub fn inputs(mut self, inputs: Vec<InputRecord>) -> Self {
        self.inputs = inputs;
        self
    }

    pub fn table(mut self, table: Table) -> Self {
        self.table = Some(table);
        self
    }
}

pub const MEASURED: &str = "measured";
pub const EXACT: &str = "exact-constant formula";
pub const SHAPE: &str = "shape-only";

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: u32,
    command: &'a str,
    tool_version: &'static str,
    config: &'a Value,
    inputs: &'a [InputRecord],
    provenance: &'a BTreeMap<String, &'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<Verdict>,
    result: &'a Value,
}

/// The report bytes: pretty JSON with fixed 17-digit floats and a final newline.
pub fn render(command: &str, outcome: &Outcome) -> Result<String, CliError> {
    let env = Envelope {
        schema_version: REPORT_SCHEMA_VERSION,
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        config: &outcome.config,
        inputs: &outcome.inputs,
        provenance: &outcome.provenance,
        verdict: outcome.verdict,
        result: &outcome.result,
    };
    let mut s = sop_core::json::to_pretty(&env).map_err(CliError::serialize)?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_csv(path: &Path, table: &Table) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(&table.header).map_err(io)?;
    for row in &table.rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    write_file(path, &bytes)
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the report (stdout when `out` is `None`), its CSV and a sidecar
/// with the run timestamp and thread count, which stay out of the report.
pub fn emit(
    command: &str,
    outcome: &Outcome,
    out: Option<&Path>,
    csv_path: Option<&Path>,
    threads: usize,
) -> Result<(), CliError> {
    let report = render(command, outcome)?;
    match out {
        Some(path) => {
            write_file(path, report.as_bytes())?;
            let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            let meta = serde_json::json!({
                "report": path.file_name().map(|f| f.to_string_lossy().into_owned()),
                "report_sha256_blob": blob_hash(report.as_bytes()),
                "created_unix_seconds": created,
                "threads": threads,
            });
            let mut text = serde_json::to_string_pretty(&meta).map_err(CliError::serialize)?;
            text.push('\n');
            write_file(&sidecar_path(path), text.as_bytes())?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(report.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    if let Some(table) = &outcome.table {
        let target = csv_path.map(Path::to_path_buf).or_else(|| out.map(|p| p.with_extension("csv")));
        if let Some(target) = target {
            write_csv(&target, table)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git_layout() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(
            blob_hash(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(sidecar_path(Path::new("a/b.json")), PathBuf::from("a/b.json.meta.json"));
    }
}
