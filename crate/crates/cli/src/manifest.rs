//! Run manifests: every command records its configuration, input and output
//! hashes, seed, and wall time next to its outputs.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub wall_seconds: f64,
    /// Whether re-running with identical inputs reproduces identical output
    /// hashes. Learned-mapper training is exempt from the guarantee.
    pub reproducible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub struct ManifestBuilder {
    command: String,
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
    reproducible: bool,
    note: Option<String>,
}

fn hash_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Hashes a file, or every regular file directly inside a directory (sorted
/// by name).
fn hash_entries(path: &Path) -> anyhow::Result<Vec<FileHash>> {
    let mut out = Vec::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != "run_manifest.json"))
            .collect();
        files.sort();
        for f in files {
            out.push(FileHash {
                path: f.display().to_string(),
                sha256: hash_file(&f)?,
            });
        }
    } else if path.is_file() {
        out.push(FileHash {
            path: path.display().to_string(),
            sha256: hash_file(path)?,
        });
    }
    Ok(out)
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
            reproducible: true,
            note: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    pub fn not_reproducible(&mut self, note: &str) -> &mut Self {
        self.reproducible = false;
        self.note = Some(note.to_string());
        self
    }

    /// Hashes everything and writes the manifest. For a directory output the
    /// manifest lands inside it as `run_manifest.json`; for a file output,
    /// next to it as `<name>.manifest.json`.
    pub fn write(&self, anchor: &Path) -> anyhow::Result<PathBuf> {
        let mut inputs = Vec::new();
        for p in &self.inputs {
            inputs.extend(hash_entries(p)?);
        }
        let mut outputs = Vec::new();
        for p in &self.outputs {
            outputs.extend(hash_entries(p)?);
        }
        let manifest = RunManifest {
            command: self.command.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config: self.config.clone(),
            inputs,
            outputs,
            wall_seconds: self.started.elapsed().as_secs_f64(),
            reproducible: self.reproducible,
            note: self.note.clone(),
        };
        let path = if anchor.is_dir() {
            anchor.join("run_manifest.json")
        } else {
            let name = anchor
                .file_name()
                .map(|n| format!("{}.manifest.json", n.to_string_lossy()))
                .unwrap_or_else(|| "run_manifest.json".to_string());
            anchor.with_file_name(name)
        };
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }
}
