//! Per-run manifests: what was run, on which inputs, and what it wrote.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::io::file_sha256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Every flag and the resolved hyperparameters.
    pub config: serde_json::Value,
    /// Input path to hex SHA-256 of its content.
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub tool_version: String,
    pub wall_seconds: f64,
    pub outputs: Vec<String>,
}

/// Collects inputs and outputs while a subcommand runs.
#[derive(Debug)]
pub struct RunRecorder {
    subcommand: &'static str,
    seed: u64,
    start: Instant,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
}

impl RunRecorder {
    pub fn new(subcommand: &'static str, seed: u64) -> Self {
        Self {
            subcommand,
            seed,
            start: Instant::now(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    /// Hashes a file, or every file directly inside a directory.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)
                .with_context(|| format!("cannot list {}", path.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            entries.sort();
            for p in entries.into_iter().filter(|p| p.is_file()) {
                self.inputs.insert(p.display().to_string(), file_sha256(&p)?);
            }
        } else {
            self.inputs.insert(path.display().to_string(), file_sha256(path)?);
        }
        Ok(())
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn outputs(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.outputs.extend(paths);
    }

    pub fn manifest_path(&self, out_dir: &Path) -> PathBuf {
        out_dir.join(format!("{}.manifest.json", self.subcommand))
    }

    /// Writes `<subcommand>.manifest.json` into `out_dir`.
    pub fn finish(self, out_dir: &Path, config: serde_json::Value) -> Result<PathBuf> {
        let path = self.manifest_path(out_dir);
        let manifest = RunManifest {
            subcommand: self.subcommand.to_owned(),
            config,
            inputs: self.inputs,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            wall_seconds: self.start.elapsed().as_secs_f64(),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        fs::create_dir_all(out_dir)?;
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}
