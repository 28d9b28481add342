//! Completion clients: the abstract contract the evaluation harness talks
//! to, an OpenAI-compatible HTTP implementation, retry handling and
//! scripted clients for tests and offline runs.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model: String,
}

impl CompletionRequest {
    /// Temperature 0, the greedy default used for grading.
    pub fn greedy(prompt: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: 1024,
            model: model.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response body: {0}")]
    MalformedBody(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl ClientError {
    /// Transport failures, 408, 429 and 5xx are retried; everything else is final.
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Status { status, .. } => matches!(status, 408 | 429 | 500..=599),
            ClientError::MalformedBody(_) | ClientError::InvalidRequest(_) => false,
        }
    }
}

/// Anything that can turn a prompt into a completion. Implementations must
/// tolerate concurrent calls.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError>;
}

impl<C: CompletionClient + ?Sized> CompletionClient for &C {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }
}

impl<C: CompletionClient + ?Sized> CompletionClient for Box<C> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts including the first; at least 1.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_attempts: 1,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Exponential backoff: `base * 2^(attempt-1)`, capped at `max_delay`.
    pub fn delay_before(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

/// Runs `call` until it succeeds, fails with a non-retryable error, or the
/// attempts run out; the last error is returned.
pub fn with_retry<T>(
    policy: &RetryPolicy,
    mut call: impl FnMut() -> Result<T, ClientError>,
) -> Result<T, ClientError> {
    let attempts = policy.max_attempts.max(1);
    let mut attempt = 1;
    loop {
        match call() {
            Ok(v) => return Ok(v),
            Err(e) if attempt < attempts && e.is_retryable() => {
                log::debug!("attempt {attempt}/{attempts} failed: {e}");
                std::thread::sleep(policy.delay_before(attempt));
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Wraps a client with [`with_retry`].
#[derive(Debug)]
pub struct Retrying<C> {
    inner: C,
    policy: RetryPolicy,
}

impl<C> Retrying<C> {
    pub fn new(inner: C, policy: RetryPolicy) -> Self {
        Self { inner, policy }
    }
}

impl<C: CompletionClient> CompletionClient for Retrying<C> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        with_retry(&self.policy, || self.inner.complete(request))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpConfig {
    /// Base URL without the `/v1/...` suffix, e.g. `https://api.openai.com`.
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout: Duration,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout: Duration::from_secs(120),
        }
    }
}

/// OpenAI-compatible chat-completions client. One attempt per call; wrap in
/// [`Retrying`] for backoff.
pub struct HttpClient {
    endpoint: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpClient")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: Option<String>,
}

impl HttpClient {
    /// Reads the key from `config.api_key_env`; a missing variable means
    /// unauthenticated requests (local servers).
    pub fn from_env(config: &HttpConfig) -> Result<Self, ClientError> {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::new(config, api_key)
    }

    pub fn new(config: &HttpConfig, api_key: Option<String>) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: format!("{}/v1/chat/completions", config.base_url.trim_end_matches('/')),
            api_key,
            http,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl CompletionClient for HttpClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        if request.temperature.is_nan() || request.temperature < 0.0 || request.max_tokens == 0 {
            return Err(ClientError::InvalidRequest(
                "temperature must be non-negative and max_tokens positive".into(),
            ));
        }
        let body = ChatBody {
            model: &request.model,
            messages: [ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let mut builder = self.http.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| ClientError::MalformedBody(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ClientError::MalformedBody("no choices with message content".into()))
    }
}

/// Answers from a fixed prompt → response map.
#[derive(Debug, Clone, Default)]
pub struct MapClient {
    responses: HashMap<String, String>,
}

impl MapClient {
    pub fn new(responses: HashMap<String, String>) -> Self {
        Self { responses }
    }
}

impl CompletionClient for MapClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        self.responses
            .get(&request.prompt)
            .cloned()
            .ok_or_else(|| ClientError::Transport("no scripted response for prompt".into()))
    }
}

/// Fails every call with a transport error and counts the calls.
#[derive(Debug, Default)]
pub struct FailingClient {
    calls: AtomicUsize,
}

impl FailingClient {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionClient for FailingClient {
    fn complete(&self, _request: &CompletionRequest) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Err(ClientError::Transport("connection refused (scripted)".into()))
    }
}

/// Adapts a closure into a client.
pub struct FnClient<F>(pub F);

impl<F> CompletionClient for FnClient<F>
where
    F: Fn(&CompletionRequest) -> Result<String, ClientError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        (self.0)(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt: String,
    pub response: String,
}

/// Records every successful exchange of the wrapped client.
#[derive(Debug)]
pub struct RecordingClient<C> {
    inner: C,
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl<C> RecordingClient<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            entries: Mutex::new(Vec::new()),
        }
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().expect("transcript lock").clone()
    }

    /// Writes the transcript as JSONL, sorted by prompt so concurrent runs
    /// produce identical files.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut entries = self.entries();
        entries.sort_by(|a, b| a.prompt.cmp(&b.prompt));
        let mut out = BufWriter::new(File::create(path)?);
        for e in &entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

impl<C: CompletionClient> CompletionClient for RecordingClient<C> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let response = self.inner.complete(request)?;
        self.entries
            .lock()
            .expect("transcript lock")
            .push(TranscriptEntry {
                prompt: request.prompt.clone(),
                response: response.clone(),
            });
        Ok(response)
    }
}

/// Replays a transcript saved by [`RecordingClient::save`].
#[derive(Debug, Clone)]
pub struct FixtureClient {
    map: MapClient,
}

impl FixtureClient {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut responses = HashMap::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(&line)?;
            responses.insert(entry.prompt, entry.response);
        }
        Ok(Self {
            map: MapClient::new(responses),
        })
    }
}

impl CompletionClient for FixtureClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        self.map.complete(request)
    }
}
