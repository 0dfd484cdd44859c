use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_snapshot: serde_json::Value,
    pub seed: u64,
    pub artifact_paths: Vec<String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seed: u64) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            config_snapshot: serde_json::to_value(config)?,
            seed,
            artifact_paths: Vec::new(),
            tool_version: TOOL_VERSION.to_string(),
        })
    }

    pub fn record(&mut self, path: &Path) {
        self.artifact_paths.push(path.display().to_string());
    }

    /// Writes `manifest.json` into `dir` and lists it among its own
    /// artifacts. Artifact paths are relative to `dir`.
    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        self.record(Path::new(MANIFEST_FILE));
        write_json(&path, &self)?;
        Ok(path)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
