//! TOML configuration covering generation, scoring, team formation, the
//! embedding provider and the index backend.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbedError, EmbeddingProvider, OfflineEmbedder, RemoteConfig, RemoteProvider, DEFAULT_OFFLINE_DIM};
use crate::index::{Backend, HnswParams};
use crate::ranking::RankingParams;
use crate::sim::{ExperimentConfig, GeneratorConfig};
use crate::team::ComplementarityParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Offline,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub offline_dim: usize,
    pub remote: RemoteConfig,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Offline,
            offline_dim: DEFAULT_OFFLINE_DIM,
            remote: RemoteConfig::default(),
        }
    }
}

impl ProviderConfig {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>, EmbedError> {
        match self.kind {
            ProviderKind::Offline => {
                if self.offline_dim == 0 {
                    return Err(EmbedError::Config("offline_dim must be positive".into()));
                }
                Ok(Box::new(OfflineEmbedder::new(self.offline_dim)))
            }
            ProviderKind::Remote => Ok(Box::new(RemoteProvider::from_config(self.remote.clone())?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexKind {
    #[default]
    BruteForce,
    Approximate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    pub backend: IndexKind,
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        let h = HnswParams::default();
        Self {
            backend: IndexKind::BruteForce,
            m: h.m,
            ef_construction: h.ef_construction,
            ef_search: h.ef_search,
            seed: h.seed,
        }
    }
}

impl IndexConfig {
    pub fn backend(&self) -> Backend {
        match self.backend {
            IndexKind::BruteForce => Backend::BruteForce,
            IndexKind::Approximate => Backend::Approximate(HnswParams {
                m: self.m,
                ef_construction: self.ef_construction,
                ef_search: self.ef_search,
                seed: self.seed,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub generator: GeneratorConfig,
    pub ranking: RankingParams,
    pub complementarity: ComplementarityParams,
    pub provider: ProviderConfig,
    pub index: IndexConfig,
    /// Seed for the random allocation arm; the generator seed when absent.
    pub random_seed: Option<u64>,
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: EngineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.generator
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.ranking.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.complementarity
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.index.m < 2 || self.index.ef_search == 0 || self.index.ef_construction == 0 {
            return Err(ConfigError::Invalid("index parameters must be positive (m >= 2)".into()));
        }
        Ok(())
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            generator: self.generator.clone(),
            ranking: self.ranking.clone(),
            complementarity: self.complementarity.clone(),
            random_seed: self.random_seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.generator.seed = seed;
        self
    }
}
