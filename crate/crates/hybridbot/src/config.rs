//! Service configuration: a TOML file, then `HYBRIDBOT_*` environment
//! overrides.
//!
//! ```toml
//! bind = "127.0.0.1:8080"
//! graph = "graph.json"          # shipped reminders graph when absent
//! model = "model.ckpt"          # no neural fallback when absent
//! journal = "reminders.journal" # in-memory store when absent
//! event_log = "events.jsonl"
//! tick_interval_ms = 1000
//! utc_offset_minutes = 330
//!
//! [hybrid]
//! tau_sim = 0.35
//! max_neural_turns = 3
//! ```

use std::path::{Path, PathBuf};

use hybridbot_core::controller::HybridConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub graph: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub journal: Option<PathBuf>,
    pub event_log: Option<PathBuf>,
    pub tick_interval_ms: u64,
    pub utc_offset_minutes: i32,
    pub hybrid: HybridConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            graph: None,
            model: None,
            journal: None,
            event_log: None,
            tick_interval_ms: 1000,
            utc_offset_minutes: 0,
            hybrid: HybridConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error("environment variable {name}: {reason}")]
    Env { name: &'static str, reason: String },
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Applies overrides from `var`, normally `std::env::var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = var("HYBRIDBOT_BIND") {
            self.bind = v;
        }
        for (name, slot) in [
            ("HYBRIDBOT_GRAPH", &mut self.graph),
            ("HYBRIDBOT_MODEL", &mut self.model),
            ("HYBRIDBOT_JOURNAL", &mut self.journal),
            ("HYBRIDBOT_EVENT_LOG", &mut self.event_log),
        ] {
            if let Some(v) = var(name) {
                *slot = Some(v.into());
            }
        }
        if let Some(v) = var("HYBRIDBOT_TICK_INTERVAL_MS") {
            self.tick_interval_ms = v.parse().map_err(|e| ConfigError::Env {
                name: "HYBRIDBOT_TICK_INTERVAL_MS",
                reason: format!("{e}"),
            })?;
        }
        if let Some(v) = var("HYBRIDBOT_UTC_OFFSET_MINUTES") {
            self.utc_offset_minutes = v.parse().map_err(|e| ConfigError::Env {
                name: "HYBRIDBOT_UTC_OFFSET_MINUTES",
                reason: format!("{e}"),
            })?;
        }
        Ok(())
    }
}
