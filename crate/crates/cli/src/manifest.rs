use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written once per output directory. Everything except
/// the wall-clock fields is a pure function of the inputs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub master_seed: Option<u64>,
    pub config: serde_json::Value,
    /// Input label or path → sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the directory → sha256.
    pub outputs: BTreeMap<String, String>,
    pub notices: Vec<String>,
    pub stage_seconds: BTreeMap<String, f64>,
    pub scan_seconds: BTreeMap<String, BTreeMap<String, f64>>,
}

impl RunManifest {
    pub fn new(command: &str, master_seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            notices: Vec::new(),
            stage_seconds: BTreeMap::new(),
            scan_seconds: BTreeMap::new(),
        }
    }

    /// Copy with the wall-clock fields cleared, for comparing reruns.
    pub fn without_timings(&self) -> Self {
        Self {
            stage_seconds: BTreeMap::new(),
            scan_seconds: BTreeMap::new(),
            ..self.clone()
        }
    }
}
