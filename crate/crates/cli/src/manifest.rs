//! Run manifests: every command records its resolved configuration, input
//! digests and output files next to its artifacts. Reruns with identical
//! inputs and seeds reproduce the manifest byte for byte except for the
//! `duration_seconds` field.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub command: String,
    pub config: serde_json::Value,
    pub master_seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<String>,
    pub duration_seconds: f64,
}

pub fn tool_version() -> String {
    format!("atnaudit {}", env!("CARGO_PKG_VERSION"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Collects a manifest while a command runs.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    master_seed: u64,
    inputs: Vec<FileDigest>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value, master_seed: u64) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config,
            master_seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(digest_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Write `manifest` to `path`, listing the manifest itself as an output.
    pub fn write(mut self, path: &Path) -> Result<(), CliError> {
        self.outputs.push(path.to_path_buf());
        let manifest = Manifest {
            tool: tool_version(),
            command: self.command,
            config: self.config,
            master_seed: self.master_seed,
            inputs: self.inputs,
            outputs: self
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Validation(format!("manifest encoding failed: {e}")))?;
        std::fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))
    }
}
