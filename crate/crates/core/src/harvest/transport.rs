//! Suggestion transports: live HTTP, fixture replay and recording.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Engine;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("{engine} returned HTTP {status} after {attempts} attempt(s)")]
    Http {
        engine: Engine,
        status: u16,
        attempts: u32,
        retry_after_ms: Option<u64>,
    },

    #[error("{engine} request failed after {attempts} attempt(s): {message}")]
    Network {
        engine: Engine,
        message: String,
        attempts: u32,
    },

    #[error("no replay fixture for {engine} query {query:?} (looked in {path})")]
    MissingFixture {
        engine: Engine,
        query: String,
        path: PathBuf,
    },

    #[error("transport is offline and has no fixtures")]
    Offline,

    #[error("fixture io error on {path}: {message}")]
    FixtureIo { path: PathBuf, message: String },
}

/// Fetches the raw autocomplete payload for one query from one engine.
pub trait SuggestionTransport: Send + Sync {
    fn fetch(&self, engine: Engine, query: &str) -> Result<String, TransportError>;
}

/// Per-engine endpoint and politeness settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSettings {
    pub endpoint: String,
    /// Minimum delay between two requests to the same engine.
    pub min_interval_ms: u64,
    pub max_retries: u32,
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub engines: BTreeMap<Engine, EngineSettings>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let mut engines = BTreeMap::new();
        for e in Engine::SEARCH {
            engines.insert(
                e,
                EngineSettings {
                    endpoint: e.default_endpoint().to_string(),
                    min_interval_ms: 1000,
                    max_retries: 3,
                    timeout_ms: 10_000,
                },
            );
        }
        EngineConfig { engines }
    }
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> crate::Result<Self> {
        toml::from_str(text).map_err(|e| crate::Error::Validation(format!("engine config: {e}")))
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn settings(&self, engine: Engine) -> EngineSettings {
        self.engines
            .get(&engine)
            .cloned()
            .unwrap_or_else(|| EngineConfig::default().engines[&engine].clone())
    }
}

/// A transport with no network access and no fixtures.
#[derive(Debug, Default, Clone, Copy)]
pub struct OfflineTransport;

impl SuggestionTransport for OfflineTransport {
    fn fetch(&self, _engine: Engine, _query: &str) -> Result<String, TransportError> {
        Err(TransportError::Offline)
    }
}

/// File name used for a query's fixture: lowercase, runs of non-alphanumerics
/// collapsed to `_`.
pub fn fixture_slug(query: &str) -> String {
    let mut out = String::with_capacity(query.len());
    for c in query.trim().to_lowercase().chars() {
        if c.is_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

pub fn fixture_path(dir: &Path, engine: Engine, query: &str) -> PathBuf {
    dir.join(engine.as_str()).join(format!("{}.json", fixture_slug(query)))
}

/// Serves payloads previously captured under `<dir>/<engine>/<slug>.json`.
#[derive(Debug, Clone)]
pub struct ReplayTransport {
    dir: PathBuf,
}

impl ReplayTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayTransport { dir: dir.into() }
    }
}

impl SuggestionTransport for ReplayTransport {
    fn fetch(&self, engine: Engine, query: &str) -> Result<String, TransportError> {
        let path = fixture_path(&self.dir, engine, query);
        std::fs::read_to_string(&path).map_err(|_| TransportError::MissingFixture {
            engine,
            query: query.to_string(),
            path,
        })
    }
}

/// Wraps another transport and saves every successful payload as a fixture.
pub struct RecordingTransport<T> {
    inner: T,
    dir: PathBuf,
}

impl<T> RecordingTransport<T> {
    pub fn new(inner: T, dir: impl Into<PathBuf>) -> Self {
        RecordingTransport { inner, dir: dir.into() }
    }
}

impl<T: SuggestionTransport> SuggestionTransport for RecordingTransport<T> {
    fn fetch(&self, engine: Engine, query: &str) -> Result<String, TransportError> {
        let payload = self.inner.fetch(engine, query)?;
        let path = fixture_path(&self.dir, engine, query);
        crate::artifact::write_atomic(&path, payload.as_bytes()).map_err(|e| TransportError::FixtureIo {
            path: path.clone(),
            message: e.to_string(),
        })?;
        Ok(payload)
    }
}

/// Enforces a minimum spacing between requests to the same engine.
#[derive(Debug, Default)]
pub struct RateLimiter {
    last: Mutex<BTreeMap<Engine, Instant>>,
}

impl RateLimiter {
    /// Reserve the next slot for `engine` and return how long to wait for it.
    pub fn reserve(&self, engine: Engine, min_interval: Duration) -> Duration {
        let mut last = self.last.lock().expect("rate limiter poisoned");
        let now = Instant::now();
        let slot = match last.get(&engine) {
            Some(prev) if *prev + min_interval > now => *prev + min_interval,
            _ => now,
        };
        last.insert(engine, slot);
        slot.saturating_duration_since(now)
    }
}

#[cfg(feature = "http")]
pub use self::http::HttpTransport;

#[cfg(feature = "http")]
mod http {
    use super::*;

    /// Live transport against the public autocomplete endpoints.
    pub struct HttpTransport {
        config: EngineConfig,
        agent: ureq::Agent,
        limiter: RateLimiter,
    }

    impl HttpTransport {
        pub fn new(config: EngineConfig) -> Self {
            let agent = ureq::Agent::config_builder()
                .http_status_as_error(false)
                .timeout_global(Some(Duration::from_millis(
                    config.engines.values().map(|s| s.timeout_ms).max().unwrap_or(10_000),
                )))
                .build()
                .into();
            HttpTransport {
                config,
                agent,
                limiter: RateLimiter::default(),
            }
        }
    }

    impl SuggestionTransport for HttpTransport {
        fn fetch(&self, engine: Engine, query: &str) -> Result<String, TransportError> {
            let settings = self.config.settings(engine);
            let attempts_allowed = settings.max_retries.max(1);
            let mut attempt = 0;
            loop {
                attempt += 1;
                std::thread::sleep(
                    self.limiter
                        .reserve(engine, Duration::from_millis(settings.min_interval_ms)),
                );
                let mut req = self.agent.get(&settings.endpoint);
                for (k, v) in engine.query_params(query) {
                    req = req.query(k, v);
                }
                let outcome = req.call();
                match outcome {
                    Ok(mut resp) => {
                        let status = resp.status().as_u16();
                        if status == 200 {
                            return resp.body_mut().read_to_string().map_err(|e| TransportError::Network {
                                engine,
                                message: e.to_string(),
                                attempts: attempt,
                            });
                        }
                        let retry_after_ms = resp
                            .headers()
                            .get("retry-after")
                            .and_then(|v| v.to_str().ok())
                            .and_then(|v| v.trim().parse::<u64>().ok())
                            .map(|s| s * 1000);
                        let retryable = status == 429 || status >= 500;
                        if !retryable || attempt >= attempts_allowed {
                            return Err(TransportError::Http {
                                engine,
                                status,
                                attempts: attempt,
                                retry_after_ms,
                            });
                        }
                        std::thread::sleep(Duration::from_millis(
                            retry_after_ms.unwrap_or(settings.min_interval_ms << attempt),
                        ));
                    }
                    Err(e) => {
                        if attempt >= attempts_allowed {
                            return Err(TransportError::Network {
                                engine,
                                message: e.to_string(),
                                attempts: attempt,
                            });
                        }
                        std::thread::sleep(Duration::from_millis(settings.min_interval_ms << attempt));
                    }
                }
            }
        }
    }
}
