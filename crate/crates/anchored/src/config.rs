//! Run configuration: a JSON file with `pipeline` and `adapter` sections.
//! Command-line flags override the file, which overrides the defaults.

use std::path::Path;
use std::time::Duration;

use anchored_core::adapters::AdapterSet;
use anchored_core::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{HttpClient, ENDPOINT_ENV};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AdapterMode {
    #[default]
    Stub,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterConfig {
    pub mode: AdapterMode,
    /// Base URL of the model service.
    pub endpoint: Option<String>,
    pub timeout_secs: f64,
    /// Extra attempts after a transport error or server error.
    pub retries: u32,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig { mode: AdapterMode::Stub, endpoint: None, timeout_secs: 600.0, retries: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub adapter: AdapterConfig,
}

/// Values given on the command line; `None` defers to the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub adapter: Option<AdapterMode>,
    pub endpoint: Option<String>,
    pub prompt: Option<String>,
}

/// Reads a config file, returning the parsed config and the file's JSON as written.
pub fn load(path: &Path) -> Result<(RunConfig, serde_json::Value)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg = serde_json::from_value(raw.clone()).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok((cfg, raw))
}

/// Applies flags over the file. The service URL comes from the flag, then
/// the environment, then the file.
pub fn resolve(mut cfg: RunConfig, flags: &Overrides, env_endpoint: Option<String>) -> Result<RunConfig> {
    if let Some(seed) = flags.seed {
        cfg.pipeline.seed = seed;
    }
    if let Some(mode) = flags.adapter {
        cfg.adapter.mode = mode;
    }
    if let Some(p) = &flags.prompt {
        cfg.pipeline.prompt = Some(p.clone());
    }
    let env_endpoint = env_endpoint.filter(|s| !s.trim().is_empty());
    if let Some(url) = flags.endpoint.clone().or(env_endpoint) {
        cfg.adapter.endpoint = Some(url);
    }
    if cfg.adapter.mode == AdapterMode::Http && cfg.adapter.endpoint.is_none() {
        return Err(Error::Config(format!("http adapters need --endpoint, {ENDPOINT_ENV} or adapter.endpoint")));
    }
    if !(cfg.adapter.timeout_secs > 0.0) {
        return Err(Error::Config("adapter.timeout_secs must be positive".into()));
    }
    cfg.pipeline.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn env_endpoint() -> Option<String> {
    std::env::var(ENDPOINT_ENV).ok()
}

pub fn build_adapters(cfg: &AdapterConfig) -> AdapterSet {
    match (cfg.mode, &cfg.endpoint) {
        (AdapterMode::Http, Some(url)) => {
            HttpClient::new(url, Duration::from_secs_f64(cfg.timeout_secs), cfg.retries).adapter_set()
        }
        _ => AdapterSet::stub(),
    }
}
