use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> CliResult<String> {
    std::fs::read(path).map(|b| sha256_hex(&b)).map_err(|e| CliError::io(path, e))
}

/// Written next to every command's outputs. Identical runs give identical
/// manifests apart from `wall_clock_seconds`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// SHA-256 of the resolved configuration as compact JSON.
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Input role to SHA-256 of the file contents.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
    pub diagnostics: serde_json::Value,
    pub wall_clock_seconds: f64,
}

pub struct ManifestBuilder {
    started: Instant,
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn start(command: &str, config: &impl Serialize, seed: Option<u64>) -> Self {
        let json = serde_json::to_vec(config).expect("configs serialize");
        Self {
            started: Instant::now(),
            manifest: RunManifest {
                command: command.into(),
                version: env!("CARGO_PKG_VERSION").into(),
                config_hash: sha256_hex(&json),
                seed,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                diagnostics: serde_json::Value::Null,
                wall_clock_seconds: 0.0,
            },
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> CliResult<()> {
        let d = file_digest(path)?;
        self.manifest.inputs.insert(role.into(), d);
        Ok(())
    }

    pub fn diagnostics(&mut self, v: impl Serialize) {
        self.manifest.diagnostics = serde_json::to_value(v).expect("diagnostics serialize");
    }

    /// Digest the named outputs in `dir` and write `{command}_manifest.json`.
    pub fn finish(mut self, dir: &Path, outputs: &[&str]) -> CliResult<RunManifest> {
        for name in outputs {
            let d = file_digest(&dir.join(name))?;
            self.manifest.outputs.insert((*name).into(), d);
        }
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        let path = dir.join(format!("{}_manifest.json", self.manifest.command));
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(self.manifest)
    }
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
