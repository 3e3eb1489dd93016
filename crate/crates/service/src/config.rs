use std::path::PathBuf;

use serde::{Deserialize, Serialize};

/// Static bearer tokens per role. With no token set, auth is off.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuthConfig {
    pub student_token: Option<String>,
    pub supervisor_token: Option<String>,
    pub coordinator_token: Option<String>,
}

impl AuthConfig {
    pub fn enabled(&self) -> bool {
        self.student_token.is_some() || self.supervisor_token.is_some() || self.coordinator_token.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Snapshot file; state is kept in memory only when unset.
    pub store_path: Option<PathBuf>,
    pub cache_ttl_secs: u64,
    pub auth: AuthConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            store_path: None,
            cache_ttl_secs: 300,
            auth: AuthConfig::default(),
        }
    }
}
