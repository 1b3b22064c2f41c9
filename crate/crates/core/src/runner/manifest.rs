use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::confparse::{render, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Record of what a run was asked to do. Written once, before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub exp_name: String,
    pub run_name: String,
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub start_time: String,
    /// SHA-256 of `config`.
    pub config_hash: String,
    /// The resolved configuration, defaults included, in config syntax.
    pub config: String,
    /// Dotted key to the layer that last set it.
    pub provenance: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(cfg: &RunConfig, config_hash: &str) -> Self {
        RunManifest {
            exp_name: cfg.exp_name.clone(),
            run_name: cfg.run_name.clone(),
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            start_time: chrono::Utc::now().to_rfc3339(),
            config_hash: config_hash.to_string(),
            config: render(&cfg.tree),
            provenance: cfg.tree.provenance.iter().map(|(k, v)| (k.join("."), v.to_string())).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn read(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(super::io_err(path))?;
        serde_json::from_str(&text).map_err(|e| RunError::Io { path: path.to_path_buf(), source: std::io::Error::other(e) })
    }
}

/// Written when every enabled stage has finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub end_time: String,
    pub status: String,
}

impl Completion {
    pub fn now() -> Self {
        Completion { end_time: chrono::Utc::now().to_rfc3339(), status: "completed".into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("completion serializes") + "\n"
    }
}
