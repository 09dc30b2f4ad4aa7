//! Layered configuration: defaults, then a TOML file, then environment variables.
//! Command-line flags are applied last by the CLI.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array_physics::ArrayConfig;
use crate::biosignal::{DEFAULT_STALENESS_TIMEOUT, DEFAULT_WINDOW};
use crate::hand::TrackerConfig;
use crate::haptics::HapticsConfig;
use crate::scene::SceneConfig;

pub const ENV_CONFIG: &str = "BIOHOLO_CONFIG";
pub const ENV_TCP_PORT: &str = "BIOHOLO_TCP_PORT";
pub const ENV_WS_PORT: &str = "BIOHOLO_WS_PORT";
pub const ENV_BIND: &str = "BIOHOLO_BIND";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub tcp_port: u16,
    pub ws_port: u16,
    pub tick_hz: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            tcp_port: 7340,
            ws_port: 7341,
            tick_hz: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiosignalConfig {
    pub window: f64,
    pub staleness_timeout: f64,
}

impl Default for BiosignalConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            staleness_timeout: DEFAULT_STALENESS_TIMEOUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub server: ServerConfig,
    pub scene: SceneConfig,
    pub haptics: HapticsConfig,
    pub array: ArrayConfig,
    pub biosignal: BiosignalConfig,
    pub tracker: TrackerConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Defaults, overlaid with `path` (or `$BIOHOLO_CONFIG`) and the port env vars.
    pub fn resolve(path: Option<&Path>) -> Result<Self, ConfigError> {
        let env_path = std::env::var(ENV_CONFIG).ok();
        let path = path.map(Path::to_path_buf).or_else(|| env_path.map(Into::into));
        let mut cfg = match path {
            Some(p) => Self::load(&p)?,
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let port = |key: &str, v: String| {
            v.trim()
                .parse::<u16>()
                .map_err(|_| ConfigError::invalid(key, format!("`{v}` is not a port number")))
        };
        if let Some(v) = get(ENV_TCP_PORT) {
            self.server.tcp_port = port(ENV_TCP_PORT, v)?;
        }
        if let Some(v) = get(ENV_WS_PORT) {
            self.server.ws_port = port(ENV_WS_PORT, v)?;
        }
        if let Some(v) = get(ENV_BIND) {
            self.server.bind = v;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.server.tick_hz > 0.0 && self.server.tick_hz <= 1000.0) {
            return Err(ConfigError::invalid(
                "server.tick_hz",
                format!("{} must be in (0, 1000]", self.server.tick_hz),
            ));
        }
        self.scene.validate().map_err(|e| {
            let key = match e {
                crate::scene::SceneError::AnchorOutsideVolume(_) => "scene.anchor",
                crate::scene::SceneError::BadRadii(_) => "scene.radii",
                crate::scene::SceneError::BadAmplitude(_) => "scene.pulse_amplitude",
            };
            ConfigError::invalid(key, e.to_string())
        })?;
        self.haptics.validate().map_err(|e| {
            let msg = e.to_string();
            let key = msg
                .split_whitespace()
                .find(|w| w.starts_with("haptics."))
                .unwrap_or("haptics")
                .to_string();
            ConfigError::invalid(&key, msg)
        })?;
        self.array
            .validate()
            .map_err(|e| ConfigError::invalid("array", e.to_string()))?;
        self.tracker
            .validate()
            .map_err(|e| ConfigError::invalid("tracker", e))?;
        let b = &self.biosignal;
        if !(b.window > 0.0 && b.window.is_finite()) {
            return Err(ConfigError::invalid(
                "biosignal.window",
                format!("{} must be positive", b.window),
            ));
        }
        if !(b.staleness_timeout >= b.window) {
            return Err(ConfigError::invalid(
                "biosignal.staleness_timeout",
                format!("{} must be at least the window ({})", b.staleness_timeout, b.window),
            ));
        }
        Ok(())
    }

    pub fn tick_dt(&self) -> f64 {
        1.0 / self.server.tick_hz
    }
}
