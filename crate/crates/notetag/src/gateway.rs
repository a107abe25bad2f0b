//! Uniform chat-completion client: a real HTTP backend with retries and a
//! deterministic cassette-backed mock so every pipeline is testable offline.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// One content part of a message: text or an image reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChatPart {
    Text { text: String },
    ImageRef { image_ref: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<ChatPart>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self { role: Role::System, parts: vec![ChatPart::Text { text: text.into() }] }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self { role: Role::User, parts: vec![ChatPart::Text { text: text.into() }] }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: Role::Assistant, parts: vec![ChatPart::Text { text: text.into() }] }
    }

    /// User message with text followed by image references.
    pub fn user_with_images(text: impl Into<String>, images: &[String]) -> Self {
        let mut parts = vec![ChatPart::Text { text: text.into() }];
        for img in images {
            parts.push(ChatPart::ImageRef { image_ref: img.clone() });
        }
        Self { role: Role::User, parts }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parts.is_empty() {
            return Err(Error::InvalidInput("message has no parts".into()));
        }
        if self.role != Role::User
            && self.parts.iter().any(|p| matches!(p, ChatPart::ImageRef { .. }))
        {
            return Err(Error::InvalidInput(
                "image parts are only allowed in user messages".into(),
            ));
        }
        Ok(())
    }

    /// All text parts joined; used when a backend wants a flat string.
    pub fn text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                ChatPart::Text { text } => Some(text.as_str()),
                _ => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Temperature defaults to 0 and max_tokens to 1024.
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self { model: model.into(), messages, temperature: 0.0, max_tokens: 1024 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.messages.is_empty() {
            return Err(Error::InvalidInput("request has no messages".into()));
        }
        if self.temperature < 0.0 {
            return Err(Error::InvalidInput("temperature must be >= 0".into()));
        }
        for m in &self.messages {
            m.validate()?;
        }
        Ok(())
    }
}

/// Stable content hash over (model, roles, text parts, image refs,
/// temperature). Identical requests yield identical fingerprints across
/// runs and platforms.
pub fn fingerprint(request: &ChatRequest) -> String {
    let mut h = Sha256::new();
    h.update(request.model.as_bytes());
    h.update([0xff]);
    for m in &request.messages {
        h.update(m.role.as_str().as_bytes());
        h.update([0xfe]);
        for p in &m.parts {
            match p {
                ChatPart::Text { text } => {
                    h.update([0x01]);
                    h.update(text.as_bytes());
                }
                ChatPart::ImageRef { image_ref } => {
                    h.update([0x02]);
                    h.update(image_ref.as_bytes());
                }
            }
            h.update([0xfd]);
        }
    }
    h.update(format!("temp={}", request.temperature).as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatCompletion {
    pub text: String,
    pub usage: TokenUsage,
}

/// The client surface every pipeline stage is written against.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    #[serde(default)]
    pub base_url: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_base: f64,
    /// Optional cap on concurrent in-flight requests.
    #[serde(default)]
    pub max_in_flight: Option<usize>,
}

fn default_api_key_env() -> String {
    "NOTETAG_API_KEY".into()
}
fn default_model() -> String {
    "default".into()
}
fn default_timeout() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    2
}
fn default_backoff() -> f64 {
    0.5
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            api_key_env: "NOTETAG_API_KEY".into(),
            model: default_model(),
            timeout: default_timeout(),
            max_retries: default_max_retries(),
            backoff_base: default_backoff(),
            max_in_flight: None,
        }
    }
}

/// One attempt against a transport.
pub enum TransportOutcome {
    Success(ChatCompletion),
    Status(u16, String),
    TimedOut,
}

/// Retry loop shared by all transports: exponential backoff
/// (backoff_base * 2^attempt) on 429 / 5xx / timeouts, at most
/// `max_retries` retries after the first attempt.
pub fn complete_with_transport<F>(
    request: &ChatRequest,
    config: &EndpointConfig,
    mut transport: F,
) -> Result<ChatCompletion>
where
    F: FnMut(&ChatRequest) -> TransportOutcome,
{
    request.validate()?;
    let mut attempt = 0u32;
    loop {
        match transport(request) {
            TransportOutcome::Success(c) => return Ok(c),
            TransportOutcome::Status(401, body) => return Err(Error::Unauthorized(body)),
            TransportOutcome::Status(status, body) => {
                let retryable = status == 429 || status >= 500;
                if !retryable {
                    return Err(Error::Http(format!("status {status}: {body}")));
                }
                if attempt >= config.max_retries {
                    return Err(if status == 429 {
                        Error::RateLimited(attempt + 1)
                    } else {
                        Error::Http(format!("status {status} after {} attempts", attempt + 1))
                    });
                }
            }
            TransportOutcome::TimedOut => {
                if attempt >= config.max_retries {
                    return Err(Error::Timeout(attempt + 1));
                }
            }
        }
        let backoff = config.backoff_base * 2f64.powi(attempt as i32);
        if backoff > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(backoff));
        }
        attempt += 1;
    }
}

/// HTTP backend speaking the de-facto chat-completions JSON convention.
pub struct HttpClient {
    config: EndpointConfig,
    http: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new(config: EndpointConfig) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout))
            .build()
            .map_err(|e| Error::Http(e.to_string()))?;
        Ok(Self { config, http })
    }

    fn wire_messages(request: &ChatRequest) -> Vec<serde_json::Value> {
        request
            .messages
            .iter()
            .map(|m| {
                let content: Vec<serde_json::Value> = m
                    .parts
                    .iter()
                    .map(|p| match p {
                        ChatPart::Text { text } => {
                            serde_json::json!({"type": "text", "text": text})
                        }
                        ChatPart::ImageRef { image_ref } => serde_json::json!({
                            "type": "image_url",
                            "image_url": {"url": image_ref}
                        }),
                    })
                    .collect();
                serde_json::json!({"role": m.role.as_str(), "content": content})
            })
            .collect()
    }

    fn attempt(&self, request: &ChatRequest) -> TransportOutcome {
        let api_key = std::env::var(&self.config.api_key_env).unwrap_or_default();
        let body = serde_json::json!({
            "model": request.model,
            "messages": Self::wire_messages(request),
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let resp = self
            .http
            .post(&url)
            .bearer_auth(api_key)
            .json(&body)
            .send();
        match resp {
            Err(e) if e.is_timeout() => TransportOutcome::TimedOut,
            Err(e) => TransportOutcome::Status(0, e.to_string()),
            Ok(r) => {
                let status = r.status().as_u16();
                let text = r.text().unwrap_or_default();
                if status != 200 {
                    return TransportOutcome::Status(status, text);
                }
                match parse_completion_body(&text) {
                    Ok(c) => TransportOutcome::Success(c),
                    Err(e) => TransportOutcome::Status(0, e.to_string()),
                }
            }
        }
    }
}

fn parse_completion_body(body: &str) -> Result<ChatCompletion> {
    let v: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| Error::MalformedResponse(format!("invalid JSON body: {e}")))?;
    let text = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| Error::MalformedResponse("missing choices[0].message.content".into()))?
        .to_string();
    let usage = TokenUsage {
        prompt_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
        completion_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
    };
    Ok(ChatCompletion { text, usage })
}

impl ChatClient for HttpClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion> {
        complete_with_transport(request, &self.config, |r| self.attempt(r))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub response_text: String,
}

/// Replay backend keyed by request fingerprint. A miss is a hard error so
/// offline runs either reproduce exactly or fail loudly.
pub struct MockClient {
    responses: HashMap<String, String>,
}

impl MockClient {
    pub fn new() -> Self {
        Self { responses: HashMap::new() }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = CassetteEntry>) -> Self {
        Self {
            responses: entries
                .into_iter()
                .map(|e| (e.fingerprint, e.response_text))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut responses = HashMap::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: CassetteEntry = serde_json::from_str(&line)?;
            responses.insert(e.fingerprint, e.response_text);
        }
        Ok(Self { responses })
    }

    pub fn insert(&mut self, fingerprint: String, response_text: String) {
        self.responses.insert(fingerprint, response_text);
    }

    /// Record a canned answer for a concrete request.
    pub fn record(&mut self, request: &ChatRequest, response_text: impl Into<String>) {
        self.responses.insert(fingerprint(request), response_text.into());
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Default for MockClient {
    fn default() -> Self {
        Self::new()
    }
}

impl ChatClient for MockClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion> {
        request.validate()?;
        let fp = fingerprint(request);
        match self.responses.get(&fp) {
            Some(text) => Ok(ChatCompletion { text: text.clone(), usage: TokenUsage::default() }),
            None => Err(Error::CacheMiss(fp)),
        }
    }
}

/// Wraps another client and appends every completion to a cassette file,
/// so a later `--offline` run can replay it.
pub struct RecordingClient<C> {
    inner: C,
    sink: Mutex<std::fs::File>,
}

impl<C: ChatClient> RecordingClient<C> {
    pub fn create(inner: C, cassette_path: &Path) -> Result<Self> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(cassette_path)?;
        Ok(Self { inner, sink: Mutex::new(file) })
    }
}

impl<C: ChatClient> ChatClient for RecordingClient<C> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatCompletion> {
        let completion = self.inner.complete(request)?;
        let entry = CassetteEntry {
            fingerprint: fingerprint(request),
            response_text: completion.text.clone(),
        };
        let mut sink = self.sink.lock().expect("cassette lock poisoned");
        writeln!(sink, "{}", serde_json::to_string(&entry)?)?;
        Ok(completion)
    }
}

/// Writes a full cassette file from entries, overwriting any existing one.
pub fn write_cassette(path: &Path, entries: &[CassetteEntry]) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
