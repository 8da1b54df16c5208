//! File formats: NGI arrays, JSON sidecars, PGM previews, CSV traces and run
//! manifests.

pub mod ngi;
pub mod pgm;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Pretty JSON with a trailing newline, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    ngi::write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| crate::Error::MissingInput(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// `iteration,residual` rows.
pub fn write_trace_csv(path: &Path, trace: &[f64]) -> Result<()> {
    let mut text = String::from("iteration,residual\n");
    for (i, r) in trace.iter().enumerate() {
        text.push_str(&format!("{},{:.17e}\n", i + 1, r));
    }
    ngi::write_atomic(path, text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// One per CLI invocation. Output digests cover every file the run wrote
/// except the manifest itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub config_hash: Option<String>,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub results: serde_json::Value,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Tracks files written during a run so the manifest can list their digests.
#[derive(Debug)]
pub struct OutputLog {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl OutputLog {
    pub fn new(root: &Path) -> Self {
        OutputLog { root: root.to_path_buf(), files: Vec::new() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn record(&mut self, path: PathBuf) {
        if !self.files.contains(&path) {
            self.files.push(path);
        }
    }

    pub fn digests(&self) -> Result<Vec<FileDigest>> {
        let mut files = self.files.clone();
        files.sort();
        files
            .iter()
            .map(|p| {
                let rel = p.strip_prefix(&self.root).unwrap_or(p);
                Ok(FileDigest { path: rel.to_string_lossy().into_owned(), sha256: file_digest(p)? })
            })
            .collect()
    }
}
