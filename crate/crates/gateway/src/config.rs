//! Gateway configuration file and the files it points to.

use std::net::IpAddr;
use std::path::{Path, PathBuf};

use phyweb_core::adapt::Bindings;
use phyweb_core::context::Thresholds;
use phyweb_core::fingerprint::{json_error_offset, parse_predicates, PredicateError, ProximityPredicate};
use phyweb_core::ruledsl;
use phyweb_core::simulator::Environment;
use serde::Deserialize;
use thiserror::Error;

use crate::store::DEFAULT_SUBSCRIBER_BUFFER;

pub const DEFAULT_PORT: u16 = 8170;
pub const DEFAULT_SIM_INTERVAL_MS: u64 = 1000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: invalid JSON at byte {offset}: {message}")]
    Json { path: PathBuf, offset: usize, message: String },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl ConfigError {
    /// Byte offset of a JSON syntax or shape error, when there is one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            ConfigError::Json { offset, .. } => Some(*offset),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SimSection {
    #[serde(default)]
    pub env_path: Option<PathBuf>,
    #[serde(default = "default_interval")]
    pub interval_ms: u64,
    #[serde(default)]
    pub seed: u64,
    /// Initial device position in meters.
    #[serde(default)]
    pub start: [f64; 2],
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection { env_path: None, interval_ms: DEFAULT_SIM_INTERVAL_MS, seed: 0, start: [0.0, 0.0] }
    }
}

fn default_interval() -> u64 {
    DEFAULT_SIM_INTERVAL_MS
}

fn default_port() -> u16 {
    DEFAULT_PORT
}

fn default_bind() -> IpAddr {
    IpAddr::from([127, 0, 0, 1])
}

fn default_buffer() -> usize {
    DEFAULT_SUBSCRIBER_BUFFER
}

/// Contents of the JSON config file. Relative paths are resolved against the
/// file's directory by [`GatewayConfig::load`].
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_bind")]
    pub bind: IpAddr,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub bindings_path: Option<PathBuf>,
    #[serde(default)]
    pub predicates_path: Option<PathBuf>,
    #[serde(default)]
    pub sim: Option<SimSection>,
    #[serde(default = "default_buffer")]
    pub subscriber_buffer: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            port: DEFAULT_PORT,
            bind: default_bind(),
            thresholds: Thresholds::default(),
            bindings_path: None,
            predicates_path: None,
            sim: None,
            subscriber_buffer: DEFAULT_SUBSCRIBER_BUFFER,
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Json {
        path: path.to_owned(),
        offset: json_error_offset(text, &e),
        message: e.to_string(),
    })
}

impl GatewayConfig {
    pub fn parse(path: &Path, text: &str) -> Result<Self, ConfigError> {
        let mut cfg: GatewayConfig = parse_json(path, text)?;
        cfg.validate().map_err(|message| ConfigError::Invalid { path: path.to_owned(), message })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.bindings_path.as_mut().map(resolve);
        cfg.predicates_path.as_mut().map(resolve);
        if let Some(env) = cfg.sim.as_mut().and_then(|s| s.env_path.as_mut()) {
            resolve(env);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(path, &read(path)?)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.thresholds.validate().map_err(|e| format!("thresholds: {e}"))?;
        if self.subscriber_buffer == 0 {
            return Err("subscriberBuffer must be positive".into());
        }
        if self.sim.as_ref().is_some_and(|s| s.interval_ms == 0) {
            return Err("sim.intervalMs must be positive".into());
        }
        Ok(())
    }

    pub fn load_bindings(&self) -> Result<Bindings, ConfigError> {
        match &self.bindings_path {
            Some(p) => load_bindings(p),
            None => Ok(Bindings::new()),
        }
    }

    pub fn load_predicates(&self) -> Result<Vec<ProximityPredicate>, ConfigError> {
        match &self.predicates_path {
            Some(p) => load_predicates(p),
            None => Ok(Vec::new()),
        }
    }
}

/// Reads a bindings file (`{"element_id": "expression", ...}`). Every
/// expression must parse.
pub fn load_bindings(path: &Path) -> Result<Bindings, ConfigError> {
    let text = read(path)?;
    let bindings: Bindings = parse_json(path, &text)?;
    for (id, expr) in &bindings {
        ruledsl::parse(expr).map_err(|e| ConfigError::Invalid {
            path: path.to_owned(),
            message: format!("binding {id:?}: {e}"),
        })?;
    }
    Ok(bindings)
}

pub fn load_predicates(path: &Path) -> Result<Vec<ProximityPredicate>, ConfigError> {
    let text = read(path)?;
    parse_predicates(&text).map_err(|e| match e {
        PredicateError::Json { offset, message } => ConfigError::Json { path: path.to_owned(), offset, message },
        other => ConfigError::Invalid { path: path.to_owned(), message: other.to_string() },
    })
}

pub fn load_environment(path: &Path) -> Result<Environment, ConfigError> {
    let text = read(path)?;
    let env: Environment = parse_json(path, &text)?;
    env.validate().map_err(|e| ConfigError::Invalid { path: path.to_owned(), message: e.to_string() })?;
    Ok(env)
}
