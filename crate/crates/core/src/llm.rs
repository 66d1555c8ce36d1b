//! Chat-completion backends (live HTTP, record, replay, scripted) and code
//! extraction from completions.

use std::collections::VecDeque;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Single user message with the default sampling parameters.
    pub fn user(model: &str, text: &str) -> Self {
        ChatRequest {
            model: model.to_string(),
            messages: vec![Message { role: "user".into(), content: text.to_string() }],
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn check(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::Request("a request needs at least one message".into()));
        }
        if !self.temperature.is_finite() || !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Request(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        Ok(())
    }

    /// Compact JSON with keys sorted at every level.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("requests serialize");
        canonical(&v)
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        serde_json::from_str(text).map_err(|e| LlmError::Request(e.to_string()))
    }
}

/// Compact rendering with object keys sorted; independent of input formatting.
pub fn canonical(v: &Value) -> String {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let parts: Vec<String> = keys
                .iter()
                .map(|k| format!("{}:{}", serde_json::to_string(k).expect("string serializes"), canonical(&m[k.as_str()])))
                .collect();
            format!("{{{}}}", parts.join(","))
        }
        Value::Array(a) => format!("[{}]", a.iter().map(canonical).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub request_digest: String,
    pub request: ChatRequest,
    pub response: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LlmError {
    Request(String),
    Network(String),
    Auth(String),
    MissingFixture { digest: String },
    EmptyCompletion,
    Io(String),
    Config(String),
}

impl fmt::Display for LlmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LlmError::Request(m) => write!(f, "invalid request: {m}"),
            LlmError::Network(m) => write!(f, "network error: {m}"),
            LlmError::Auth(m) => write!(f, "authentication failed: {m}"),
            LlmError::MissingFixture { digest } => write!(f, "no replay fixture for request {digest}"),
            LlmError::EmptyCompletion => write!(f, "the backend returned an empty completion"),
            LlmError::Io(m) => write!(f, "fixture store: {m}"),
            LlmError::Config(m) => write!(f, "backend configuration: {m}"),
        }
    }
}

impl std::error::Error for LlmError {}

pub trait LlmBackend: Send + Sync {
    /// Backend-specific completion without the shared checks.
    fn raw_complete(&self, r: &ChatRequest) -> Result<String, LlmError>;

    fn tag(&self) -> &'static str;

    /// Validates the request, completes it and rejects empty completions.
    fn complete(&self, r: &ChatRequest) -> Result<String, LlmError> {
        r.check()?;
        let text = self.raw_complete(r)?;
        if text.trim().is_empty() {
            return Err(LlmError::EmptyCompletion);
        }
        Ok(text)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<B> {
    fn raw_complete(&self, r: &ChatRequest) -> Result<String, LlmError> {
        (**self).raw_complete(r)
    }

    fn tag(&self) -> &'static str {
        (**self).tag()
    }
}

/// Chat-completions endpoint over HTTP.
pub struct HttpBackend {
    pub base_url: String,
    pub api_key: String,
    pub timeout: Duration,
}

impl HttpBackend {
    /// `LARG_LLM_BASE_URL` (default the public OpenAI endpoint) and
    /// `LARG_LLM_API_KEY`, falling back to `OPENAI_API_KEY`.
    pub fn from_env() -> Result<Self, LlmError> {
        let base_url = std::env::var("LARG_LLM_BASE_URL").unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        let api_key = std::env::var("LARG_LLM_API_KEY")
            .or_else(|_| std::env::var("OPENAI_API_KEY"))
            .map_err(|_| LlmError::Config("set LARG_LLM_API_KEY or OPENAI_API_KEY for the live backend".into()))?;
        Ok(HttpBackend { base_url, api_key, timeout: Duration::from_secs(120) })
    }
}

impl LlmBackend for HttpBackend {
    fn raw_complete(&self, r: &ChatRequest) -> Result<String, LlmError> {
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(serde_json::to_string(r).expect("requests serialize"))
            .map_err(|e| LlmError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let body: Value = resp.body_mut().read_json().map_err(|e| LlmError::Network(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(LlmError::Auth(format!("HTTP {status}"))),
            _ => return Err(LlmError::Network(format!("HTTP {status}: {body}"))),
        }
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Network("response has no choices[0].message.content".into()))
    }

    fn tag(&self) -> &'static str {
        "live"
    }
}

pub fn fixture_path(dir: &Path, digest: &str) -> PathBuf {
    dir.join(format!("{digest}.json"))
}

/// Serves stored completions keyed by request digest.
pub struct ReplayBackend {
    pub dir: PathBuf,
}

impl LlmBackend for ReplayBackend {
    fn raw_complete(&self, r: &ChatRequest) -> Result<String, LlmError> {
        let digest = r.digest();
        let path = fixture_path(&self.dir, &digest);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(LlmError::MissingFixture { digest }),
            Err(e) => return Err(LlmError::Io(format!("{}: {e}", path.display()))),
        };
        let t: Transcript = serde_json::from_str(&text).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Ok(t.response)
    }

    fn tag(&self) -> &'static str {
        "replay"
    }
}

/// Wraps another backend and stores every exchange as a fixture.
pub struct RecordingBackend {
    pub inner: Box<dyn LlmBackend>,
    pub dir: PathBuf,
    /// Fixed timestamp for reproducible fixture files; `None` uses the clock.
    pub timestamp: Option<u64>,
    writes: Mutex<()>,
}

impl RecordingBackend {
    pub fn new(inner: Box<dyn LlmBackend>, dir: impl Into<PathBuf>) -> Self {
        RecordingBackend { inner, dir: dir.into(), timestamp: None, writes: Mutex::new(()) }
    }
}

impl LlmBackend for RecordingBackend {
    fn raw_complete(&self, r: &ChatRequest) -> Result<String, LlmError> {
        let response = self.inner.complete(r)?;
        let timestamp = self
            .timestamp
            .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
        let t = Transcript {
            request_digest: r.digest(),
            request: r.clone(),
            response: response.clone(),
            timestamp,
            backend: self.inner.tag().to_string(),
        };
        let _guard = self.writes.lock().unwrap_or_else(|e| e.into_inner());
        std::fs::create_dir_all(&self.dir).map_err(|e| LlmError::Io(e.to_string()))?;
        let mut body = serde_json::to_string_pretty(&t).expect("transcripts serialize");
        body.push('\n');
        std::fs::write(fixture_path(&self.dir, &t.request_digest), body).map_err(|e| LlmError::Io(e.to_string()))?;
        Ok(response)
    }

    fn tag(&self) -> &'static str {
        "record"
    }
}

/// Returns canned completions in order. Used to author fixtures and in tests.
pub struct ScriptedBackend {
    queue: Mutex<VecDeque<Result<String, LlmError>>>,
}

impl ScriptedBackend {
    pub fn new<I: IntoIterator<Item = String>>(responses: I) -> Self {
        ScriptedBackend { queue: Mutex::new(responses.into_iter().map(Ok).collect()) }
    }

    pub fn with_results<I: IntoIterator<Item = Result<String, LlmError>>>(results: I) -> Self {
        ScriptedBackend { queue: Mutex::new(results.into_iter().collect()) }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl LlmBackend for ScriptedBackend {
    fn raw_complete(&self, _r: &ChatRequest) -> Result<String, LlmError> {
        self.queue
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pop_front()
            .unwrap_or_else(|| Err(LlmError::Config("scripted backend ran out of responses".into())))
    }

    fn tag(&self) -> &'static str {
        "scripted"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Extracted {
    pub code: String,
    /// True when no fenced block was found and the whole completion was taken.
    pub unfenced: bool,
}

impl Extracted {
    /// Heuristic used to tell prose-only answers from code.
    pub fn looks_like_code(&self) -> bool {
        let c = self.code.trim();
        !c.is_empty() && c.lines().any(|l| {
            let l = l.trim_start();
            l.starts_with("def ") || l.starts_with("import ") || l.starts_with("from ") || l.starts_with("return ")
        })
    }
}

/// Content of the first fenced code block, or the whole completion flagged as unfenced.
pub fn extract_code(completion: &str) -> Result<Extracted, LlmError> {
    if completion.trim().is_empty() {
        return Err(LlmError::EmptyCompletion);
    }
    if let Some(open) = completion.find("```") {
        let after = &completion[open + 3..];
        // skip the info string (language tag) up to the end of the line
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        let code = match body.find("```") {
            Some(close) => &body[..close],
            None => body,
        };
        return Ok(Extracted { code: code.trim_end().to_string(), unfenced: false });
    }
    Ok(Extracted { code: completion.to_string(), unfenced: true })
}
