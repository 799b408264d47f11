//! Batch client for OpenAI-compatible `/completions` endpoints.
//!
//! Each prompt is cut right after `result = [` so the model continues the
//! list and never sees the gold block. Requests run with bounded concurrency;
//! results come back in input order. Failed requests are retried with jittered
//! exponential backoff and, once retries are exhausted, recorded on the
//! record instead of failing the batch.

use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::CompiledExample;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    /// e.g. `http://localhost:8000/v1`; `/completions` is appended.
    pub base_url: String,
    /// Environment variable holding the API key. The key itself is never
    /// stored in configs, manifests or reports.
    pub api_key_env: String,
    pub model_name: String,
    pub max_new_tokens: u32,
    pub temperature: f32,
    pub stop_sequences: Vec<String>,
    /// Re-append the first stop sequence when the endpoint stopped on it, so
    /// the generated list keeps its closing bracket.
    pub restore_stop: bool,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub concurrency: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            base_url: String::new(),
            api_key_env: "IECODE_API_KEY".into(),
            model_name: String::new(),
            max_new_tokens: 512,
            temperature: 0.0,
            stop_sequences: vec!["\n]".into()],
            restore_stop: true,
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
            concurrency: 8,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClientError {
    #[error("client config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub doc_id: String,
    /// Continuation text after `result = [`.
    pub generation: String,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GenerationRecord {
    /// The generation as a complete list literal, ready for the parser.
    pub fn result_text(&self) -> String {
        format!("[{}", self.generation)
    }
}

/// Records with empty generations and no I/O.
pub fn dry_run(prompts: &[CompiledExample]) -> Vec<GenerationRecord> {
    prompts
        .iter()
        .map(|p| GenerationRecord {
            doc_id: p.doc_id.clone(),
            generation: String::new(),
            latency_ms: 0,
            error: None,
        })
        .collect()
}

/// Records whose generation is the gold continuation; a perfect-model stub.
pub fn gold_echo(prompts: &[CompiledExample]) -> Vec<GenerationRecord> {
    prompts
        .iter()
        .map(|p| GenerationRecord {
            doc_id: p.doc_id.clone(),
            generation: p.gold_list()[1..].to_string(),
            latency_ms: 0,
            error: None,
        })
        .collect()
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f32,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

pub struct Client {
    cfg: ClientConfig,
    api_key: String,
    http: reqwest::Client,
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client")
            .field("cfg", &self.cfg)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl Client {
    /// Reads the key from `cfg.api_key_env`.
    pub fn new(cfg: ClientConfig) -> Result<Self, ClientError> {
        let key = std::env::var(&cfg.api_key_env)
            .map_err(|_| ClientError::Config(format!("environment variable {} is not set", cfg.api_key_env)))?;
        Self::with_api_key(cfg, key)
    }

    pub fn with_api_key(cfg: ClientConfig, api_key: String) -> Result<Self, ClientError> {
        if cfg.base_url.trim().is_empty() {
            return Err(ClientError::Config("base_url is empty".into()));
        }
        if api_key.is_empty() {
            return Err(ClientError::Config("API key is empty".into()));
        }
        if cfg.concurrency == 0 {
            return Err(ClientError::Config("concurrency must be at least 1".into()));
        }
        if !cfg.timeout_secs.is_finite() || cfg.timeout_secs <= 0.0 {
            return Err(ClientError::Config("timeout_secs must be positive and finite".into()));
        }
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(Client { cfg, api_key, http })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.cfg
    }

    fn endpoint(&self) -> String {
        format!("{}/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    async fn request_once(&self, prompt: &str) -> Result<Choice, Failure> {
        let body = CompletionRequest {
            model: &self.cfg.model_name,
            prompt,
            max_tokens: self.cfg.max_new_tokens,
            temperature: self.cfg.temperature,
            stop: &self.cfg.stop_sequences,
        };
        let resp = self
            .http
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .await
            .map_err(|e| Failure::Retryable(format!("transport: {}", e.without_url())))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Failure::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(format!("HTTP {status}")));
        }
        let parsed: CompletionResponse = resp
            .json()
            .await
            .map_err(|e| Failure::Fatal(format!("bad response body: {}", e.without_url())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Failure::Fatal("response has no choices".into()))
    }

    fn finish(&self, choice: Choice) -> String {
        let mut text = choice.text;
        if self.cfg.restore_stop && choice.finish_reason.as_deref() == Some("stop") {
            if let Some(stop) = self.cfg.stop_sequences.first() {
                if !self.cfg.stop_sequences.iter().any(|s| text.ends_with(s.as_str())) {
                    text.push_str(stop);
                }
            }
        }
        text
    }

    async fn generate_one(&self, index: usize, example: &CompiledExample) -> GenerationRecord {
        let prompt = example.generation_prefix();
        let start = Instant::now();
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.subsec_nanos() as u64);
        let mut jitter = SeededRng::new(nanos ^ index as u64);
        let mut attempt = 0;
        let outcome = loop {
            match self.request_once(prompt).await {
                Ok(choice) => break Ok(self.finish(choice)),
                Err(Failure::Fatal(e)) => break Err(e),
                Err(Failure::Retryable(e)) if attempt >= self.cfg.max_retries => {
                    break Err(format!("{e} (after {} attempts)", attempt + 1))
                }
                Err(Failure::Retryable(e)) => {
                    let base = self.cfg.backoff_ms.saturating_mul(1 << attempt.min(16)) as f64;
                    let wait = base * (0.5 + jitter.unit());
                    log::debug!("{}: attempt {} failed ({e}), retrying in {wait:.0} ms", example.doc_id, attempt + 1);
                    tokio::time::sleep(Duration::from_millis(wait as u64)).await;
                    attempt += 1;
                }
            }
        };
        let latency_ms = start.elapsed().as_millis() as u64;
        match outcome {
            Ok(generation) => GenerationRecord {
                doc_id: example.doc_id.clone(),
                generation,
                latency_ms,
                error: None,
            },
            Err(e) => {
                log::warn!("{}: {e}", example.doc_id);
                GenerationRecord {
                    doc_id: example.doc_id.clone(),
                    generation: String::new(),
                    latency_ms,
                    error: Some(e),
                }
            }
        }
    }

    /// One record per prompt, in input order.
    pub async fn generate(&self, prompts: &[CompiledExample]) -> Vec<GenerationRecord> {
        stream::iter(prompts.iter().enumerate())
            .map(|(i, p)| self.generate_one(i, p))
            .buffered(self.cfg.concurrency)
            .collect()
            .await
    }

    /// [`Client::generate`] on a private runtime.
    pub fn generate_blocking(&self, prompts: &[CompiledExample]) -> Vec<GenerationRecord> {
        tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .expect("tokio runtime")
            .block_on(self.generate(prompts))
    }
}
