//! Run artifacts: CSV tables, JSON summaries and input fingerprints.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL: &str = "latent-spectra";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 over `"blob <len>\0"` followed by the content, as git does for
/// blobs in SHA-256 repositories.
pub fn git_blob_sha256(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

impl InputRecord {
    pub fn new(path: impl Into<String>, bytes: &[u8]) -> Self {
        InputRecord {
            path: path.into(),
            bytes: bytes.len(),
            sha256: git_blob_sha256(bytes),
        }
    }
}

/// One JSON document per run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config: Value,
    pub inputs: Vec<InputRecord>,
    pub metrics: Value,
    pub artifacts: Vec<String>,
}

impl Summary {
    pub fn new(subcommand: &str, config: Value, inputs: Vec<InputRecord>, metrics: Value) -> Self {
        Summary {
            tool: TOOL,
            version: VERSION,
            subcommand: subcommand.to_string(),
            config,
            inputs,
            metrics,
            artifacts: Vec::new(),
        }
    }

    /// Pretty JSON with a trailing newline. Fails if any metric is not a
    /// finite number.
    pub fn to_json(&self) -> Result<String> {
        check_finite("metrics", &self.metrics)?;
        check_finite("config", &self.config)?;
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

/// Serializes any value to a JSON tree.
pub fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    serde_json::to_value(x).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// serde_json turns NaN and infinities into `null`; those are refused.
fn check_finite(path: &str, v: &Value) -> Result<()> {
    match v {
        Value::Null => Err(Error::NonFinite(format!("{path} holds a null or non-finite value"))),
        Value::Number(n) if n.as_f64().is_some_and(|x| !x.is_finite()) => {
            Err(Error::NonFinite(format!("{path} is not finite")))
        }
        Value::Array(xs) => xs
            .iter()
            .enumerate()
            .try_for_each(|(i, x)| check_finite(&format!("{path}[{i}]"), x)),
        Value::Object(m) => m.iter().try_for_each(|(k, x)| check_finite(&format!("{path}.{k}"), x)),
        _ => Ok(()),
    }
}

/// Plain comma-separated table; numbers use Rust's shortest round-trip
/// formatting, so output never depends on locale.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) -> Result<()> {
        if cells.len() != self.header.len() {
            return Err(Error::Shape(format!("row has {} cells, header {}", cells.len(), self.header.len())));
        }
        self.rows.push(cells);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.header.join(","));
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        s
    }
}

/// Formats a float for CSV, refusing non-finite values.
pub fn num(x: f64) -> Result<String> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("cannot write {x} to a table")));
    }
    Ok(format!("{x}"))
}

/// Collects artifacts for one run and writes them under `dir`.
#[derive(Debug)]
pub struct ArtifactWriter<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl<'a> ArtifactWriter<'a> {
    pub fn new(dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactWriter { dir, written: Vec::new() })
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), data)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn csv(&mut self, name: &str, table: &Csv) -> Result<()> {
        self.bytes(name, table.render().as_bytes())
    }

    /// Writes the summary last, listing everything written before it.
    pub fn finish(mut self, name: &str, mut summary: Summary) -> Result<Summary> {
        summary.artifacts = std::mem::take(&mut self.written);
        let json = summary.to_json()?;
        fs::write(self.dir.join(name), json)?;
        Ok(summary)
    }
}
