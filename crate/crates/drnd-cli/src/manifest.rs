//! Run manifests: resolved config echo, seeds, timestamps, emitted files
//! with content hashes, and per-check pass/fail results.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use drnd_core::error::{DrndError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Fully resolved configuration (defaults applied, overrides folded in).
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<FileEntry>,
    pub checks: Vec<CheckResult>,
    /// Per-seed errors; a failing seed does not abort the others.
    pub errors: Vec<String>,
    /// True when every check passed and no errors were recorded.
    pub passed: bool,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Collects output files as they are written and assembles the manifest.
pub struct RunRecorder {
    pub out_dir: PathBuf,
    subcommand: String,
    config: serde_json::Value,
    seeds: Vec<u64>,
    started: u64,
    files: Vec<FileEntry>,
    checks: Vec<CheckResult>,
    errors: Vec<String>,
}

impl RunRecorder {
    pub fn new<C: Serialize>(
        out_dir: &Path,
        subcommand: &str,
        config: &C,
        seeds: &[u64],
    ) -> Result<Self> {
        fs::create_dir_all(out_dir)?;
        let config = serde_json::to_value(config)
            .map_err(|e| DrndError::Config(format!("config echo serialization: {e}")))?;
        Ok(RunRecorder {
            out_dir: out_dir.to_path_buf(),
            subcommand: subcommand.to_string(),
            config,
            seeds: seeds.to_vec(),
            started: unix_now(),
            files: Vec::new(),
            checks: Vec::new(),
            errors: Vec::new(),
        })
    }

    /// Write a CSV file (header + rows) into the output directory and record
    /// its hash. Rows must already be comma-joined.
    pub fn write_csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut text = String::with_capacity(rows.len() * 32 + header.len() + 1);
        text.push_str(header);
        text.push('\n');
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        self.write_file(name, text.as_bytes())
    }

    /// Write an arbitrary file into the output directory and record its hash.
    pub fn write_file(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(name);
        fs::write(&path, bytes)?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    pub fn record_error(&mut self, context: &str, err: &DrndError) {
        self.errors.push(format!("{context}: {err}"));
    }

    /// Finalize: write `manifest.json` and return the manifest. The manifest
    /// file itself is not listed in `files`.
    pub fn finish(mut self) -> Result<RunManifest> {
        let passed = self.errors.is_empty() && self.checks.iter().all(|c| c.passed);
        let manifest = RunManifest {
            subcommand: std::mem::take(&mut self.subcommand),
            config: std::mem::take(&mut self.config),
            seeds: std::mem::take(&mut self.seeds),
            started_unix: self.started,
            finished_unix: unix_now(),
            files: std::mem::take(&mut self.files),
            checks: std::mem::take(&mut self.checks),
            errors: std::mem::take(&mut self.errors),
            passed,
        };
        let json = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| DrndError::Config(format!("manifest serialization: {e}")))?;
        fs::write(self.out_dir.join("manifest.json"), json)?;
        Ok(manifest)
    }
}

/// Deterministic float rendering for CSV cells: shortest representation
/// that round-trips, so identical values always produce identical bytes.
pub fn fmt_f64(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}
