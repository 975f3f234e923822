//! Prompt submission, response persistence and the simulated provider.

mod http;
mod simulate;
mod store;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::prompt::{Prompt, PromptKey};

pub use http::{ChatRequest, ChatTransport, HttpTransport};
pub use simulate::{BiasProfile, LevelOverride, Simulator};
pub use store::{RunStore, StoreError};

fn default_top_p() -> f64 {
    1.0
}
fn default_top_k() -> i64 {
    -1
}
fn default_max_tokens() -> u32 {
    1024
}
fn default_timeout() -> f64 {
    120.0
}
fn default_attempts() -> u32 {
    4
}
fn default_backoff() -> u64 {
    500
}

/// Sampling and transport settings for one `(model, temperature)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_id: String,
    pub endpoint: String,
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    /// `-1` leaves sampling unrestricted and is not sent.
    #[serde(default = "default_top_k")]
    pub top_k: i64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub requests_per_second: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{model}: temperature must be >= 0, got {value}")]
    Temperature { model: String, value: f64 },
    #[error("{model}: top_p must lie in (0, 1], got {value}")]
    TopP { model: String, value: f64 },
    #[error("{model}: max_attempts must be at least 1")]
    Attempts { model: String },
    #[error("{model}: {message}")]
    Other { model: String, message: String },
}

impl ModelConfig {
    pub fn new(model_id: impl Into<String>, endpoint: impl Into<String>, temperature: f64) -> Self {
        ModelConfig {
            model_id: model_id.into(),
            endpoint: endpoint.into(),
            temperature,
            top_p: default_top_p(),
            top_k: default_top_k(),
            max_tokens: default_max_tokens(),
            request_timeout_secs: default_timeout(),
            max_attempts: default_attempts(),
            backoff_ms: default_backoff(),
            api_key_env: None,
            requests_per_second: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let model = self.model_id.clone();
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ConfigError::Temperature {
                model,
                value: self.temperature,
            });
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ConfigError::TopP { model, value: self.top_p });
        }
        if self.max_attempts == 0 {
            return Err(ConfigError::Attempts { model });
        }
        if self.model_id.trim().is_empty() {
            return Err(ConfigError::Other {
                model,
                message: "empty model id".into(),
            });
        }
        if self.request_timeout_secs.is_nan() || self.request_timeout_secs <= 0.0 {
            return Err(ConfigError::Other {
                model,
                message: "request timeout must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Transport,
    Auth,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{kind:?}: {message}")]
pub struct CallError {
    pub kind: FailureKind,
    pub message: String,
    /// Whether another attempt may succeed.
    pub retryable: bool,
}

impl CallError {
    pub fn transient(message: impl Into<String>) -> Self {
        CallError {
            kind: FailureKind::Transport,
            message: message.into(),
            retryable: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub kind: FailureKind,
    pub message: String,
}

/// One model response with provenance. Records carrying an `error` are kept
/// for auditing but never scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    #[serde(flatten)]
    pub prompt: PromptKey,
    pub model_id: String,
    pub temperature: f64,
    pub response_text: String,
    pub latency_ms: u64,
    pub attempt: u32,
    /// Milliseconds since the Unix epoch; zero for simulated responses.
    pub timestamp_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RecordError>,
}

impl ResponseRecord {
    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }

    pub fn triple(&self) -> (PromptKey, String, u64) {
        (self.prompt.clone(), self.model_id.clone(), self.temperature.to_bits())
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Sends one prompt, retrying retryable failures with exponential backoff.
/// Failures after the last attempt come back as an error record.
pub fn submit(prompt: &Prompt, config: &ModelConfig, transport: &dyn ChatTransport) -> ResponseRecord {
    let request = ChatRequest::new(prompt, config);
    let started = Instant::now();
    let mut attempt = 0;
    let outcome = loop {
        attempt += 1;
        match transport.complete(&request, config) {
            Ok(text) => break Ok(text),
            Err(e) if e.retryable && attempt < config.max_attempts => {
                let delay = config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                log::debug!("{} {}: attempt {attempt} failed ({e}); retrying in {delay} ms", config.model_id, prompt.key);
                std::thread::sleep(Duration::from_millis(delay));
            }
            Err(e) => break Err(e),
        }
    };
    let (response_text, error) = match outcome {
        Ok(text) => (text, None),
        Err(e) => {
            log::warn!("{} {}: giving up after {attempt} attempt(s): {e}", config.model_id, prompt.key);
            (
                String::new(),
                Some(RecordError {
                    kind: e.kind,
                    message: e.message,
                }),
            )
        }
    };
    ResponseRecord {
        prompt: prompt.key.clone(),
        model_id: config.model_id.clone(),
        temperature: config.temperature,
        response_text,
        latency_ms: started.elapsed().as_millis() as u64,
        attempt,
        timestamp_ms: now_ms(),
        error,
    }
}

/// Anything that can answer a prompt under a model configuration.
pub trait ResponseSource: Sync {
    fn respond(&self, prompt: &Prompt, config: &ModelConfig) -> ResponseRecord;
}

/// Spaces calls so that at most `rate` start per second.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(rate: f64) -> RateLimiter {
        RateLimiter {
            interval: Duration::from_secs_f64(1.0 / rate.max(1e-6)),
            next: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Live endpoints, rate limited per endpoint URL.
pub struct LiveSource<T: ChatTransport> {
    transport: T,
    limiters: Mutex<std::collections::HashMap<String, std::sync::Arc<RateLimiter>>>,
}

impl<T: ChatTransport> LiveSource<T> {
    pub fn new(transport: T) -> Self {
        LiveSource {
            transport,
            limiters: Mutex::new(Default::default()),
        }
    }
}

impl<T: ChatTransport + Sync + Send> ResponseSource for LiveSource<T> {
    fn respond(&self, prompt: &Prompt, config: &ModelConfig) -> ResponseRecord {
        if let Some(rate) = config.requests_per_second {
            let limiter = {
                let mut map = self.limiters.lock().unwrap_or_else(|e| e.into_inner());
                map.entry(config.endpoint.clone())
                    .or_insert_with(|| std::sync::Arc::new(RateLimiter::new(rate)))
                    .clone()
            };
            limiter.acquire();
        }
        submit(prompt, config, &self.transport)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub submitted: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// Answers every `(prompt, config)` pair not already in `store`.
///
/// Workers pull jobs from a shared counter, so at most `parallelism`
/// requests are in flight; the calling thread is the only writer. Records
/// with an error do not count as done and are retried by the next run.
pub fn run_batch(
    prompts: &[Prompt],
    configs: &[ModelConfig],
    source: &dyn ResponseSource,
    store: &RunStore,
    parallelism: usize,
) -> Result<BatchSummary, StoreError> {
    let parallelism = parallelism.max(1);
    let done = store.completed()?;
    let mut jobs: Vec<(&Prompt, &ModelConfig)> = Vec::new();
    let mut skipped = 0;
    for config in configs {
        for prompt in prompts {
            let key = (prompt.key.clone(), config.model_id.clone(), config.temperature.to_bits());
            if done.contains(&key) {
                skipped += 1;
            } else {
                jobs.push((prompt, config));
            }
        }
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<ResponseRecord>();
    let mut summary = BatchSummary {
        skipped,
        ..Default::default()
    };
    let write_result = std::thread::scope(|scope| {
        for _ in 0..parallelism.min(jobs.len()) {
            let tx = tx.clone();
            let jobs = &jobs;
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((prompt, config)) = jobs.get(i) else { break };
                if tx.send(source.respond(prompt, config)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut writer = store.writer();
        for record in rx {
            summary.submitted += 1;
            if record.is_error() {
                summary.failed += 1;
            }
            if let Err(e) = writer.append(&record) {
                // stop handing out work; in-flight jobs finish and are dropped
                next.store(usize::MAX / 2, Ordering::Relaxed);
                return Err(e);
            }
        }
        writer.flush()
    });
    write_result?;
    store.compact()?;
    if summary.failed > 0 {
        log::warn!("{} of {} submissions failed", summary.failed, summary.submitted);
    }
    Ok(summary)
}
