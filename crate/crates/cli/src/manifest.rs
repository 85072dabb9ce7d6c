use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{CliError, CliResult};
use crate::run_config::RunConfig;
use fesim_core::characterization::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

/// Record of one run, sufficient to repeat it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// sha256 over command, format and the resolved configuration.
    pub config_digest: String,
    pub seed: u64,
    pub tool_version: String,
    pub format: String,
    pub outputs: Vec<OutputFile>,
    pub config: RunConfig,
}

pub fn config_digest(command: &str, format: &str, seed: u64, config: &RunConfig) -> CliResult<String> {
    let text = format!("{command}\n{format}\n{seed}\n{}", config.to_toml_string()?);
    Ok(sha256_hex(text.as_bytes()))
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}
