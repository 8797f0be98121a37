//! Run manifests: what ran, with which fully resolved settings, and the
//! SHA-256 of every file it wrote.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Settings;
use crate::UsageError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: Settings,
    pub seed: u64,
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// file name → sha256 hex
    pub outputs: BTreeMap<String, String>,
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<(), UsageError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| UsageError(e.to_string()))?;
        std::fs::write(dir.join("manifest.json"), text)
            .map_err(|e| UsageError(format!("cannot write manifest: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| UsageError(format!("malformed manifest {}: {e}", path.display())))
    }
}
