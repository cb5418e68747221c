//! CSV output with run manifests.
//!
//! Every output directory gets a `manifest.json` recording the subcommand,
//! the full effective config, its hash, the seed, the design parameters in
//! force and a SHA-256 of every CSV written next to it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serializes `rows` with a header row. An empty slice still gets a header
/// when `header` is given.
pub fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(vec![]);
    if rows.is_empty() {
        w.write_record(header).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Invalid(e.to_string()))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        k => Error::Parse { line: 0, msg: format!("{k:?}") },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: String,
    pub config: Value,
    pub config_hash: String,
    pub seed: u64,
    pub decisions: BTreeMap<String, Value>,
    /// Unix seconds.
    pub started_at: u64,
    pub git_hash: String,
    pub version: String,
    /// File name → SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(subcommand: &str, config: Value, seed: u64, decisions: BTreeMap<String, Value>) -> Result<Self> {
        let config_hash = sha256_hex(&serde_json::to_vec(&config)?);
        Ok(Manifest {
            subcommand: subcommand.into(),
            config,
            config_hash,
            seed,
            decisions,
            started_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            git_hash: git_hash(),
            version: env!("CARGO_PKG_VERSION").into(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Output directory that tracks what it writes.
pub struct RunDir {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl RunDir {
    pub fn create(dir: &Path, manifest: Manifest) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(RunDir { dir: dir.to_path_buf(), manifest })
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T], header: &[&str]) -> Result<PathBuf> {
        let bytes = csv_bytes(rows, header)?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.manifest.outputs.insert(name.into(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn finish(self) -> Result<PathBuf> {
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_vec_pretty(&self.manifest)?)?;
        Ok(path)
    }
}

/// `git rev-parse HEAD` of the working directory, or "unknown".
pub fn git_hash() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}
