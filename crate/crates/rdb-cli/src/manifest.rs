//! Run manifests: every command records its resolved configuration, seed,
//! and input content hashes before doing any long computation, so any run
//! can be replayed to identical outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rdb::error::{Error, Result};
use rdb::train::file_sha256;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    /// Subcommand this manifest replays.
    pub command: String,
    /// Fully resolved options (flags already merged over any config file).
    pub config: serde_json::Value,
    pub seed: u64,
    /// Content hashes of the input files the run read.
    pub input_hashes: BTreeMap<String, String>,
    /// Paths the run promises to produce, relative to its output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: serde_json::Value,
        seed: u64,
        inputs: &[PathBuf],
        outputs: &[&str],
    ) -> Result<Self> {
        let mut input_hashes = BTreeMap::new();
        for path in inputs {
            input_hashes.insert(path.display().to_string(), file_sha256(path)?);
        }
        Ok(RunManifest {
            version: 1,
            command: command.to_string(),
            config,
            seed,
            input_hashes,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// Write to `<out_dir>/run_manifest.json` (the dataset manifest written by
    /// synthesis keeps the plain `manifest.json` name).
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let path = out_dir.join("run_manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!(
            "{}: {e}",
            path.display()
        )))
    }
}
