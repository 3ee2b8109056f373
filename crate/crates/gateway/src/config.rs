use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use crate::GatewayError;

pub const DEFAULT_CACHE_TTL_SECONDS: u64 = 300;
pub const DEFAULT_FETCH_TIMEOUT_SECONDS: u64 = 10;
pub const DEFAULT_MAX_BODY_BYTES: u64 = 10 * 1024 * 1024;

/// Environment variable that may name the config file.
pub const CONFIG_ENV: &str = "SIGSCRIPT_CONFIG";

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen_addr: String,
    pub policy_path: PathBuf,
    #[serde(default = "default_ttl")]
    pub cache_ttl_seconds: u64,
    #[serde(default = "default_timeout")]
    pub fetch_timeout_seconds: u64,
    #[serde(default = "default_max_body")]
    pub max_body_bytes: u64,
    #[serde(default)]
    pub fallback_root: Option<PathBuf>,
}

fn default_ttl() -> u64 {
    DEFAULT_CACHE_TTL_SECONDS
}

fn default_timeout() -> u64 {
    DEFAULT_FETCH_TIMEOUT_SECONDS
}

fn default_max_body() -> u64 {
    DEFAULT_MAX_BODY_BYTES
}

impl GatewayConfig {
    pub fn new(listen_addr: impl Into<String>, policy_path: impl Into<PathBuf>) -> Self {
        Self {
            listen_addr: listen_addr.into(),
            policy_path: policy_path.into(),
            cache_ttl_seconds: DEFAULT_CACHE_TTL_SECONDS,
            fetch_timeout_seconds: DEFAULT_FETCH_TIMEOUT_SECONDS,
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            fallback_root: None,
        }
    }

    /// Reads a JSON config. Relative `policy_path` and `fallback_root` are
    /// resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let config_err = |reason: String| GatewayError::Config {
            path: path.display().to_string(),
            reason,
        };
        let raw = std::fs::read(path).map_err(|e| config_err(e.to_string()))?;
        let mut config: GatewayConfig =
            serde_json::from_slice(&raw).map_err(|e| config_err(e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.policy_path = base.join(&config.policy_path);
        config.fallback_root = config.fallback_root.map(|root| base.join(root));
        if config.max_body_bytes == 0 {
            return Err(config_err("max_body_bytes must be positive".into()));
        }
        if config.fetch_timeout_seconds == 0 {
            return Err(config_err("fetch_timeout_seconds must be positive".into()));
        }
        Ok(config)
    }

    pub fn cache_ttl(&self) -> Duration {
        Duration::from_secs(self.cache_ttl_seconds)
    }

    pub fn fetch_timeout(&self) -> Duration {
        Duration::from_secs(self.fetch_timeout_seconds)
    }
}
