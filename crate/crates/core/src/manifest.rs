//! Run manifest: the full configuration, map checksum, seed, timestamps and
//! artifact list of a training run, as JSON.
//!
//! It is written when a run starts and rewritten when it ends, each time
//! atomically, so a crashed run still leaves a readable manifest with status
//! `running`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::RunConfig;
use crate::snapshot::write_atomic;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot access manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRecord {
    pub name: String,
    /// Where the map was loaded from (a path or `bundled:<name>`).
    pub source: String,
    /// Copy of the map inside the run directory.
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub status: RunStatus,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub iterations: Option<u64>,
    pub error: Option<String>,
    pub map: MapRecord,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
    pub config: RunConfig,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(config: &RunConfig, map: MapRecord) -> Self {
        RunManifest {
            version: MANIFEST_VERSION,
            status: RunStatus::Running,
            seed: config.trainer.seed,
            started_at: now(),
            finished_at: None,
            iterations: None,
            error: None,
            map,
            artifacts: Vec::new(),
            config: config.clone(),
        }
    }

    pub fn complete(&mut self, iterations: u64, artifacts: Vec<String>) {
        self.status = RunStatus::Completed;
        self.finished_at = Some(now());
        self.iterations = Some(iterations);
        self.artifacts = artifacts;
    }

    pub fn fail(&mut self, error: &str) {
        self.status = RunStatus::Failed;
        self.finished_at = Some(now());
        self.error = Some(error.to_string());
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(path, json.as_bytes()).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ManifestError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }
}
