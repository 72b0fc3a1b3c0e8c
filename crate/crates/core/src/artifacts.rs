//! Run artifacts: RFC-4180 CSV with CRLF, JSON with sorted keys, and a
//! manifest of sha256 hashes. The wall-clock timestamp lives only in a
//! separate metadata file so data artifacts are byte-reproducible.

use crate::error::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METADATA_FILE: &str = "metadata.json";

/// Pretty JSON with sorted object keys and a trailing newline.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    // round-tripping through Value sorts keys (BTreeMap-backed maps)
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Shortest round-trip decimal form, independent of locale.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Collects the files of one run and writes the manifest last.
#[derive(Debug)]
pub struct ArtifactWriter {
    out_dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl ArtifactWriter {
    pub fn new(out_dir: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(out_dir.as_ref())?;
        Ok(ArtifactWriter { out_dir: out_dir.as_ref().to_path_buf(), entries: Vec::new() })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        if name == MANIFEST_FILE || name == METADATA_FILE || name.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid artifact name {name:?}")));
        }
        let path = self.out_dir.join(name);
        fs::write(&path, bytes)?;
        self.entries.retain(|e| e.file != name);
        self.entries.push(ManifestEntry { file: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let text = to_sorted_json(value)?;
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let bytes = csv_bytes(header, rows)?;
        self.write_bytes(name, &bytes)
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Writes manifest.json (command, config, sorted file hashes) and
    /// metadata.json (timestamp, version).
    pub fn finish<C: Serialize>(mut self, command: &str, config: &C) -> Result<Vec<ManifestEntry>> {
        self.entries.sort_by(|a, b| a.file.cmp(&b.file));
        let manifest = serde_json::json!({
            "command": command,
            "config": serde_json::to_value(config)?,
            "files": self.entries,
        });
        fs::write(self.out_dir.join(MANIFEST_FILE), to_sorted_json(&manifest)?)?;
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let meta = serde_json::json!({
            "timestamp_unix": secs,
            "version": env!("CARGO_PKG_VERSION"),
        });
        fs::write(self.out_dir.join(METADATA_FILE), to_sorted_json(&meta)?)?;
        Ok(self.entries)
    }
}

/// Recomputes the hashes listed in a manifest; returns the mismatching files.
pub fn verify_manifest(out_dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = out_dir.as_ref();
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let files = v["files"].as_array().ok_or_else(|| Error::Config("manifest without files".into()))?;
    let mut bad = Vec::new();
    for f in files {
        let name = f["file"].as_str().unwrap_or_default();
        let expect = f["sha256"].as_str().unwrap_or_default();
        match fs::read(dir.join(name)) {
            Ok(bytes) if sha256_hex(&bytes) == expect => {}
            _ => bad.push(name.to_string()),
        }
    }
    Ok(bad)
}
