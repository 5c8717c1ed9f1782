//! Simulation configuration files.
//!
//! A config is TOML, or JSON when the file name ends in `.json`. A
//! `run_meta.json` written by a previous run is also accepted; its embedded
//! resolved config is used. The reference schema is
//! `config/schema.json`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{AffinityTable, AgentBackend, AgentError, ChatCompletionAgent, ChatCompletionConfig, ScriptedAgent};
use crate::behavior::DEFAULT_RECENT_WINDOW;
use crate::model::{validate_roster, ActorConfig, ToolId};
use crate::platform::{FixtureSearch, HttpPlatform, HttpPlatformConfig, InMemoryPlatform, LiveSearch, Platform, SearchProvider};
use crate::scheduler::{InterArrivalMode, SimulationSettings, DEFAULT_EVENT_CAP};

const PRESET: &str = include_str!("../config/preset.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Scripted {
        /// JSON affinity table; the bundled one when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        affinity: Option<PathBuf>,
    },
    ChatCompletionHttp(ChatCompletionConfig),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Scripted { affinity: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlatformConfig {
    #[default]
    InMemory,
    HttpRemote(HttpPlatformConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchConfig {
    Fixture {
        /// Corpus file; the bundled corpus when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
    },
    Live {
        endpoint: String,
        #[serde(default = "default_search_timeout")]
        timeout_secs: f64,
    },
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig::Fixture { path: None }
    }
}

fn default_search_timeout() -> f64 {
    10.0
}

fn default_recent_window() -> usize {
    DEFAULT_RECENT_WINDOW
}

fn default_event_cap() -> usize {
    DEFAULT_EVENT_CAP
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub horizon_minutes: f64,
    /// A fresh seed is drawn at run time when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub interarrival_mode: InterArrivalMode,
    #[serde(default)]
    pub topic: String,
    #[serde(default = "default_recent_window")]
    pub recent_window: usize,
    /// Per actor and event kind.
    #[serde(default = "default_event_cap")]
    pub event_cap: usize,
    /// Wall-clock seconds per simulated minute; no pacing when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pacing_secs_per_minute: Option<f64>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub platform: PlatformConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub actors: Vec<ActorConfig>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: field `{field}`: {message}")]
    Parse {
        origin: String,
        field: String,
        message: String,
    },
    #[error("{origin}: field `{field}`: {message}")]
    Invalid {
        origin: String,
        field: String,
        message: String,
    },
}

impl ConfigError {
    /// Dotted path of the offending field, when known.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Io { .. } => None,
            ConfigError::Parse { field, .. } | ConfigError::Invalid { field, .. } => Some(field),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ConfigFormat {
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => ConfigFormat::Json,
            _ => ConfigFormat::Toml,
        }
    }
}

fn path_string(path: &serde_path_to_error::Path) -> String {
    let s = path.to_string();
    if s == "." {
        "<root>".into()
    } else {
        s
    }
}

/// Parses and validates config text. `origin` names the source in messages.
pub fn parse_config(text: &str, format: ConfigFormat, origin: &str) -> Result<SimulationConfig, ConfigError> {
    let parsed = match format {
        ConfigFormat::Toml => {
            let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Parse {
                origin: origin.into(),
                field: "<root>".into(),
                message: e.to_string(),
            })?;
            serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
                origin: origin.into(),
                field: path_string(e.path()),
                message: e.inner().to_string().trim_end().to_owned(),
            })?
        }
        ConfigFormat::Json => {
            let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
                origin: origin.into(),
                field: "<root>".into(),
                message: e.to_string(),
            })?;
            if let Some(embedded) = value.get("config").filter(|_| value.get("config_hash").is_some()) {
                // A run_meta.json document.
                serde_path_to_error::deserialize(embedded).map_err(|e| ConfigError::Parse {
                    origin: origin.into(),
                    field: format!("config.{}", path_string(e.path())),
                    message: e.inner().to_string(),
                })?
            } else {
                let mut de = serde_json::Deserializer::from_str(text);
                serde_path_to_error::deserialize(&mut de).map_err(|e| ConfigError::Parse {
                    origin: origin.into(),
                    field: path_string(e.path()),
                    message: e.inner().to_string(),
                })?
            }
        }
    };
    resolve(parsed, origin)
}

/// Reads, parses and validates a config file. Relative corpus and affinity
/// paths are taken relative to the file's directory.
pub fn load_config(path: &Path) -> Result<SimulationConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut config = parse_config(&text, ConfigFormat::for_path(path), &path.display().to_string())?;
    let base = path.parent().unwrap_or(Path::new("."));
    let anchor = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    if let SearchConfig::Fixture { path: Some(p) } = &mut config.search {
        anchor(p);
    }
    if let BackendConfig::Scripted { affinity: Some(p) } = &mut config.backend {
        anchor(p);
    }
    Ok(config)
}

/// The shipped ten-actor preset.
pub fn preset() -> SimulationConfig {
    parse_config(PRESET, ConfigFormat::Toml, "preset.toml").expect("bundled preset is valid")
}

pub fn preset_text() -> &'static str {
    PRESET
}

/// JSON Schema of the config document. A copy is kept in
/// `config/schema.json`.
pub fn schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(SimulationConfig)).expect("schema serializes")
}

fn resolve(mut config: SimulationConfig, origin: &str) -> Result<SimulationConfig, ConfigError> {
    let invalid = |field: &str, message: String| ConfigError::Invalid {
        origin: origin.into(),
        field: field.into(),
        message,
    };
    if !(config.horizon_minutes.is_finite() && config.horizon_minutes >= 0.0) {
        return Err(invalid(
            "horizon_minutes",
            format!("{} is not a finite non-negative number of minutes", config.horizon_minutes),
        ));
    }
    if config.recent_window == 0 {
        return Err(invalid("recent_window", "must be a positive integer".into()));
    }
    if config.event_cap == 0 {
        return Err(invalid("event_cap", "must be a positive integer".into()));
    }
    if let Some(p) = config.pacing_secs_per_minute {
        if !(p.is_finite() && p >= 0.0) {
            return Err(invalid("pacing_secs_per_minute", format!("{p} is not a non-negative number")));
        }
    }
    if let BackendConfig::ChatCompletionHttp(chat) = &config.backend {
        if !(chat.timeout_secs.is_finite() && chat.timeout_secs > 0.0) {
            return Err(invalid("backend.timeout_secs", "must be positive".into()));
        }
        if chat.endpoint.trim().is_empty() {
            return Err(invalid("backend.endpoint", "must not be empty".into()));
        }
    }
    if let PlatformConfig::HttpRemote(http) = &config.platform {
        if !(http.timeout_secs.is_finite() && http.timeout_secs > 0.0) {
            return Err(invalid("platform.timeout_secs", "must be positive".into()));
        }
    }
    validate_roster(&config.actors).map_err(|e| invalid(&e.field, e.message))?;
    for actor in &mut config.actors {
        actor.tools.extend(ToolId::BASE_SUITE);
        actor.tools.sort();
        actor.tools.dedup();
    }
    Ok(config)
}

impl SimulationConfig {
    pub fn settings(&self) -> SimulationSettings {
        SimulationSettings {
            horizon: self.horizon_minutes,
            mode: self.interarrival_mode,
            recent_window: self.recent_window,
            event_cap: self.event_cap,
            topic: self.topic.clone(),
            record_draws: false,
            pacing: self.pacing_secs_per_minute,
        }
    }

    /// One backend instance per actor, in roster order.
    pub fn build_agents(&self) -> Result<Vec<Box<dyn AgentBackend>>, AgentError> {
        match &self.backend {
            BackendConfig::Scripted { affinity } => {
                let table = match affinity {
                    None => AffinityTable::default(),
                    Some(path) => std::fs::read_to_string(path)
                        .map_err(|e| e.to_string())
                        .and_then(|text| AffinityTable::from_json(&text).map_err(|e| e.to_string()))
                        .map_err(|e| AgentError::Precondition(format!("affinity table {}: {e}", path.display())))?,
                };
                Ok(self
                    .actors
                    .iter()
                    .map(|_| Box::new(ScriptedAgent::new(table.clone())) as Box<dyn AgentBackend>)
                    .collect())
            }
            BackendConfig::ChatCompletionHttp(chat) => self
                .actors
                .iter()
                .map(|_| ChatCompletionAgent::new(chat.clone()).map(|a| Box::new(a) as Box<dyn AgentBackend>))
                .collect(),
        }
    }

    pub fn build_platform(&self) -> Box<dyn Platform> {
        match &self.platform {
            PlatformConfig::InMemory => Box::new(InMemoryPlatform::new()),
            PlatformConfig::HttpRemote(http) => Box::new(HttpPlatform::new(http.clone())),
        }
    }

    pub fn build_search(&self) -> Result<Box<dyn SearchProvider>, crate::platform::SearchError> {
        Ok(match &self.search {
            SearchConfig::Fixture { path: None } => Box::new(FixtureSearch::bundled()),
            SearchConfig::Fixture { path: Some(p) } => Box::new(FixtureSearch::from_path(p)?),
            SearchConfig::Live { endpoint, timeout_secs } => {
                Box::new(LiveSearch::new(endpoint.clone(), Duration::from_secs_f64(*timeout_secs)))
            }
        })
    }

    /// SHA-256 over the canonical JSON encoding, as lowercase hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }
}
