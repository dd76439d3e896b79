use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

/// A usage or configuration problem; exits with code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Usage(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Contents of the `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub simulate: Option<SimulateConfig>,
    pub serve: Option<ServeConfig>,
}

impl CliConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).with_context(|| format!("config {}", path.display()))
    }
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: Option<usize>,
    pub structure: Option<String>,
    pub trials: Option<u32>,
    pub repetitions: Option<usize>,
    pub params: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub tweets: Option<PathBuf>,
    pub prefix: Option<String>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: Option<String>,
    pub log_dir: Option<PathBuf>,
    pub lobby_timeout_secs: Option<u64>,
    pub document_deadline_secs: Option<u64>,
    #[serde(default)]
    pub runs: Vec<ServeRun>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeRun {
    pub run_id: String,
    pub structure: String,
    #[serde(default = "default_n")]
    pub n: usize,
    pub trials: Option<u32>,
    pub seed: Option<u64>,
    /// Seconds per trial.
    pub response_deadline: Option<u64>,
}

fn default_n() -> usize {
    20
}
