//! Run manifests: one JSON document per command invocation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments as given on the command line (without the program name).
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub config: Value,
    /// Wall-clock seconds; recorded only with `--timing`, since it would
    /// otherwise break byte-identical re-runs.
    pub timing: Option<f64>,
    pub results: BTreeMap<String, Value>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, seed: Option<u64>, config: Value) -> Self {
        Self {
            command: command.to_string(),
            args,
            seed,
            config,
            timing: None,
            results: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn record(&mut self, key: &str, value: impl Serialize) -> CliResult<()> {
        let v = serde_json::to_value(value).map_err(|e| CliError::Internal(e.to_string()))?;
        self.results.insert(key.to_string(), v);
        Ok(())
    }

    pub fn to_json(&self) -> CliResult<String> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Internal(e.to_string()))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        serde_json::from_str(&text).map_err(|e| CliError::Io { path: path.to_path_buf(), message: e.to_string() })
    }
}
