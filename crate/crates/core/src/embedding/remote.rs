use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingProvider, EmbeddingVector, TextItem};

/// Settings for an HTTP embedding endpoint.
///
/// The endpoint receives a JSON array of strings and must answer with a JSON
/// array of float arrays in the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub dimension: usize,
    pub batch_size: usize,
    pub cost_per_text: f64,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub timeout_secs: u64,
    /// Minimum spacing between requests to the endpoint.
    pub min_interval_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            token_env: "TEAMUP_EMBEDDING_TOKEN".into(),
            dimension: 1536,
            batch_size: 64,
            cost_per_text: 0.0,
            max_attempts: 3,
            backoff_base_ms: 500,
            timeout_secs: 30,
            min_interval_ms: 0,
        }
    }
}

pub struct RemoteProvider {
    config: RemoteConfig,
    token: String,
    agent: ureq::Agent,
    texts: AtomicU64,
    requests: AtomicU64,
    last_request: Mutex<Option<Instant>>,
}

enum Attempt {
    Retry(EmbedError),
    Fatal(EmbedError),
}

impl RemoteProvider {
    /// Reads the token from the environment variable named in the config.
    pub fn from_config(config: RemoteConfig) -> Result<Self, EmbedError> {
        let token = std::env::var(&config.token_env)
            .map_err(|_| EmbedError::Config(format!("environment variable {} is not set", config.token_env)))?;
        Self::with_token(config, token)
    }

    pub fn with_token(config: RemoteConfig, token: impl Into<String>) -> Result<Self, EmbedError> {
        if config.endpoint.is_empty() {
            return Err(EmbedError::Config("endpoint is empty".into()));
        }
        if config.batch_size == 0 || config.dimension == 0 || config.max_attempts == 0 {
            return Err(EmbedError::Config(
                "batch_size, dimension and max_attempts must be positive".into(),
            ));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(Self {
            config,
            token: token.into(),
            agent,
            texts: AtomicU64::new(0),
            requests: AtomicU64::new(0),
            last_request: Mutex::new(None),
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// HTTP requests issued so far, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn pace(&self) {
        if self.config.min_interval_ms == 0 {
            return;
        }
        let gap = Duration::from_millis(self.config.min_interval_ms);
        let mut last = self.last_request.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(t) = *last {
            let elapsed = t.elapsed();
            if elapsed < gap {
                thread::sleep(gap - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn send_once(&self, body: &str, expected: usize) -> Result<Vec<EmbeddingVector>, Attempt> {
        self.pace();
        self.requests.fetch_add(1, Ordering::Relaxed);
        let resp = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.token))
            .header("Content-Type", "application/json")
            .send(body);
        let mut resp = match resp {
            Ok(r) => r,
            Err(e) => return Err(Attempt::Retry(EmbedError::Network(e.to_string()))),
        };
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(Attempt::Fatal(EmbedError::Auth(format!("HTTP {status}")))),
            429 => return Err(Attempt::Retry(EmbedError::RateLimited { attempts: 0 })),
            500..=599 => return Err(Attempt::Retry(EmbedError::Network(format!("HTTP {status}")))),
            _ => return Err(Attempt::Fatal(EmbedError::Provider(format!("HTTP {status}")))),
        }
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(EmbedError::Network(e.to_string())))?;
        let rows: Vec<Vec<f64>> = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(EmbedError::Provider(format!("malformed response: {e}"))))?;
        if rows.len() != expected {
            return Err(Attempt::Fatal(EmbedError::Provider(format!(
                "expected {expected} vectors, got {}",
                rows.len()
            ))));
        }
        rows.into_iter()
            .map(|row| {
                if row.len() != self.config.dimension {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.config.dimension,
                        actual: row.len(),
                    });
                }
                EmbeddingVector::normalized(row)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(Attempt::Fatal)
    }

    fn send_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let body = serde_json::to_string(texts).map_err(|e| EmbedError::Provider(e.to_string()))?;
        let mut last = EmbedError::Network("no attempt made".into());
        for attempt in 1..=self.config.max_attempts {
            match self.send_once(&body, texts.len()) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => last = e,
            }
            if attempt < self.config.max_attempts {
                let delay = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1));
                thread::sleep(Duration::from_millis(delay));
            }
        }
        Err(match last {
            EmbedError::RateLimited { .. } => EmbedError::RateLimited {
                attempts: self.config.max_attempts,
            },
            other => other,
        })
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn embed_batch(&self, items: &[TextItem]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if items.iter().any(|i| i.text.trim().is_empty()) {
            return Err(EmbedError::EmptyText);
        }
        let texts: Vec<&str> = items.iter().map(|i| i.text.as_str()).collect();
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size) {
            out.extend(self.send_batch(chunk)?);
            self.texts.fetch_add(chunk.len() as u64, Ordering::Relaxed);
        }
        Ok(out)
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn cost_per_text(&self) -> f64 {
        self.config.cost_per_text
    }

    fn texts_embedded(&self) -> u64 {
        self.texts.load(Ordering::Relaxed)
    }
}
