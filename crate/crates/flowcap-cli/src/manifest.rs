use crate::error::{CliError, CliResult};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmittedFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub library_version: String,
    /// sha256 of the canonical (key-sorted, compact) config JSON.
    pub config_hash: String,
    pub config: Value,
    pub files: Vec<EmittedFile>,
    pub summary: Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// serde_json maps are key-sorted, so compact serialization is canonical.
pub fn config_hash(config: &Value) -> String {
    sha256_hex(serde_json::to_string(config).expect("json value").as_bytes())
}

pub fn describe(dir: &Path, files: &[PathBuf]) -> CliResult<Vec<EmittedFile>> {
    files
        .iter()
        .map(|f| {
            let bytes = std::fs::read(f).map_err(|e| CliError::io(f, e))?;
            let rel = f.strip_prefix(dir).unwrap_or(f);
            Ok(EmittedFile { path: rel.display().to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) })
        })
        .collect()
}
