//! Run manifest: everything needed to re-run an experiment
//! bit-identically, plus the artifacts it produced.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Seed as requested on the command line (may be `time-microseconds`).
    pub seed_requested: String,
    /// The concrete seed the run used; re-running with this seed and the
    /// recorded parameters reproduces the outputs byte for byte.
    pub seed: u32,
    pub scale: String,
    pub jobs: Option<usize>,
    pub parameters: serde_json::Value,
    pub outputs: Vec<String>,
    pub unix_time_ms: u128,
}

impl Manifest {
    pub fn write(&self, dir: &Path, base: &str) -> Result<PathBuf> {
        let path = dir.join(format!("{base}.manifest.json"));
        let body = serde_json::to_string_pretty(self).context("serializing manifest")?;
        std::fs::write(&path, body + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
