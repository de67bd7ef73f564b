//! Chat-completion client with a content-addressed response cache.
//!
//! Three modes: `live` calls the endpoint, `record` calls it and appends every
//! new response to the cache, `replay` answers from the cache only and never
//! touches the transport.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::provenance::sha256_hex;

pub const API_KEY_ENV: &str = "NLUFORGE_API_KEY";
pub const ENDPOINT_ENV: &str = "NLUFORGE_ENDPOINT";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    #[default]
    Replay,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!("unknown llm mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub mode: Mode,
    pub cache_path: Option<PathBuf>,
    pub max_in_flight: usize,
    pub attempts: u32,
    pub backoff_ms: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: "gpt-4".into(),
            temperature: 0.2,
            top_p: 0.95,
            max_tokens: 1024,
            mode: Mode::Replay,
            cache_path: None,
            max_in_flight: 4,
            attempts: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Hex digest identifying the request in the cache.
    pub fn cache_key(&self) -> String {
        let v = json!([
            self.model,
            self.prompt,
            self.temperature,
            self.top_p,
            self.max_tokens
        ]);
        sha256_hex(serde_json::to_vec(&v).expect("request serializes"))
    }

    fn wire_body(&self) -> serde_json::Value {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": self.prompt}],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: Option<String>,
}

impl ChatResponse {
    pub fn stop(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            finish_reason: Some("stop".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("transient transport failure: {0}")]
    Transient(String),
    #[error("transport failure: {0}")]
    Fatal(String),
}

/// Anything that can answer a chat request.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;
}

/// Transport backed by a closure; counts every call.
pub struct FnTransport<F> {
    f: F,
    calls: AtomicUsize,
}

impl<F> FnTransport<F>
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, TransportError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self {
            f,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> Transport for FnTransport<F>
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, TransportError> + Send + Sync,
{
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(request)
    }
}

/// OpenAI-compatible chat-completions over HTTPS.
pub struct HttpTransport {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(180)))
            .http_status_as_error(true)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            api_key,
            agent,
        }
    }

    /// Endpoint from config, then the environment, then the default.
    pub fn from_env(endpoint: Option<&str>) -> Self {
        let endpoint = endpoint
            .map(str::to_string)
            .or_else(|| std::env::var(ENDPOINT_ENV).ok())
            .unwrap_or_else(|| DEFAULT_ENDPOINT.to_string());
        Self::new(endpoint, std::env::var(API_KEY_ENV).ok())
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(request.wire_body()).map_err(|e| match e {
            ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
                TransportError::Transient(format!("HTTP {code}"))
            }
            ureq::Error::StatusCode(code) => TransportError::Fatal(format!("HTTP {code}")),
            ureq::Error::Io(e) => TransportError::Transient(e.to_string()),
            ureq::Error::Timeout(t) => TransportError::Transient(format!("timeout: {t}")),
            other => TransportError::Fatal(other.to_string()),
        })?;
        let body: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::Fatal(format!("bad response body: {e}")))?;
        let choice = &body["choices"][0];
        let content = choice["message"]["content"]
            .as_str()
            .ok_or_else(|| TransportError::Fatal("response has no message content".into()))?;
        Ok(ChatResponse {
            content: content.to_string(),
            finish_reason: choice["finish_reason"].as_str().map(str::to_string),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub response: String,
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("language model unavailable after {attempts} attempt(s): {cause}")]
    LlmUnavailable { attempts: u32, cause: String },
    #[error("no cached response for key {key}")]
    CacheMiss { key: String },
    #[error("response truncated at the token limit")]
    ResponseTooLong,
    #[error("cache i/o: {0}")]
    Io(String),
    #[error("cache line {line}: {cause}")]
    CorruptCache { line: usize, cause: String },
}

/// Append-only JSONL store of responses keyed by request digest.
#[derive(Default)]
pub struct ResponseCache {
    entries: RwLock<HashMap<String, String>>,
    path: Option<PathBuf>,
    writer: Mutex<Option<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists; new entries are appended to it. Later lines
    /// never override earlier ones.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            for e in read_entries(&path)? {
                entries.entry(e.key).or_insert(e.response);
            }
        }
        Ok(Self {
            entries: RwLock::new(entries),
            path: Some(path),
            writer: Mutex::new(None),
        })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: &str, response: &str) -> Result<(), LlmError> {
        {
            let mut map = self.entries.write().expect("cache lock");
            if map.contains_key(key) {
                return Ok(());
            }
            map.insert(key.to_string(), response.to_string());
        }
        let Some(path) = &self.path else {
            return Ok(());
        };
        let entry = CacheEntry {
            key: key.to_string(),
            response: response.to_string(),
            created_at: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let mut guard = self.writer.lock().expect("cache writer lock");
        if guard.is_none() {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| LlmError::Io(e.to_string()))?;
            }
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| LlmError::Io(e.to_string()))?;
            *guard = Some(f);
        }
        let f = guard.as_mut().expect("writer opened");
        let line = serde_json::to_string(&entry).expect("cache entry serializes");
        writeln!(f, "{line}").map_err(|e| LlmError::Io(e.to_string()))
    }
}

/// Reads every line of a cache file.
pub fn read_entries(path: &Path) -> Result<Vec<CacheEntry>, LlmError> {
    let f = File::open(path).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| LlmError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: CacheEntry = serde_json::from_str(&line).map_err(|e| LlmError::CorruptCache {
            line: i + 1,
            cause: e.to_string(),
        })?;
        out.push(e);
    }
    Ok(out)
}

/// Rewrites a cache file keeping the first entry per key, sorted by key.
/// Returns (kept, dropped).
pub fn compact_cache(path: &Path) -> Result<(usize, usize), LlmError> {
    let entries = read_entries(path)?;
    let total = entries.len();
    let mut seen = HashMap::new();
    for e in entries {
        seen.entry(e.key.clone()).or_insert(e);
    }
    let mut kept: Vec<_> = seen.into_values().collect();
    kept.sort_by(|a, b| a.key.cmp(&b.key));
    let mut text = String::new();
    for e in &kept {
        text.push_str(&serde_json::to_string(e).expect("cache entry serializes"));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| LlmError::Io(e.to_string()))?;
    Ok((kept.len(), total - kept.len()))
}

/// A configured model endpoint plus its cache.
pub struct LlmClient {
    pub config: LlmConfig,
    transport: Option<Arc<dyn Transport>>,
    cache: ResponseCache,
}

impl LlmClient {
    pub fn new(
        config: LlmConfig,
        transport: Option<Arc<dyn Transport>>,
        cache: ResponseCache,
    ) -> Self {
        Self {
            config,
            transport,
            cache,
        }
    }

    /// Client over the configured cache file and, outside replay mode, the
    /// HTTP transport.
    pub fn from_config(config: LlmConfig) -> Result<Self, LlmError> {
        let cache = match &config.cache_path {
            Some(p) => ResponseCache::open(p)?,
            None => ResponseCache::in_memory(),
        };
        let transport: Option<Arc<dyn Transport>> = match config.mode {
            Mode::Replay => None,
            _ => Some(Arc::new(HttpTransport::from_env(
                config.endpoint.as_deref(),
            ))),
        };
        Ok(Self::new(config, transport, cache))
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn request(&self, prompt: &str) -> ChatRequest {
        ChatRequest {
            model: self.config.model.clone(),
            prompt: prompt.to_string(),
            temperature: self.config.temperature,
            top_p: self.config.top_p,
            max_tokens: self.config.max_tokens,
        }
    }

    pub fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let req = self.request(prompt);
        let key = req.cache_key();
        match self.config.mode {
            Mode::Replay => return self.cache.get(&key).ok_or(LlmError::CacheMiss { key }),
            Mode::Record => {
                if let Some(hit) = self.cache.get(&key) {
                    return Ok(hit);
                }
            }
            Mode::Live => {}
        }
        let response = self.send_with_retry(&req)?;
        if self.config.mode == Mode::Record {
            self.cache.insert(&key, &response)?;
        }
        Ok(response)
    }

    fn send_with_retry(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let Some(transport) = &self.transport else {
            return Err(LlmError::LlmUnavailable {
                attempts: 0,
                cause: "no transport configured".into(),
            });
        };
        let attempts = self.config.attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 && self.config.backoff_ms > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.config.backoff_ms << (attempt - 1),
                ));
            }
            match transport.send(req) {
                Ok(r) if r.finish_reason.as_deref() == Some("length") => {
                    return Err(LlmError::ResponseTooLong)
                }
                Ok(r) => return Ok(r.content),
                Err(TransportError::Transient(e)) => {
                    log::warn!("llm attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
                Err(TransportError::Fatal(e)) => {
                    return Err(LlmError::LlmUnavailable {
                        attempts: attempt + 1,
                        cause: e,
                    })
                }
            }
        }
        Err(LlmError::LlmUnavailable {
            attempts,
            cause: last,
        })
    }

    /// Completes every prompt with at most `max_in_flight` concurrent calls.
    /// Results are in prompt order.
    pub fn complete_all(&self, prompts: &[String]) -> Vec<Result<String, LlmError>> {
        let n = prompts.len();
        let workers = self.config.max_in_flight.max(1).min(n.max(1));
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<String, LlmError>>>> =
            (0..n).map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= n {
                        break;
                    }
                    let r = self.complete(&prompts[i]);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| {
                m.into_inner()
                    .expect("slot lock")
                    .expect("every slot filled")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mode: Mode) -> LlmConfig {
        LlmConfig {
            mode,
            backoff_ms: 0,
            ..LlmConfig::default()
        }
    }

    fn echo(
    ) -> Arc<FnTransport<impl Fn(&ChatRequest) -> Result<ChatResponse, TransportError> + Send + Sync>>
    {
        Arc::new(FnTransport::new(|r: &ChatRequest| {
            Ok(ChatResponse::stop(format!("re: {}", r.prompt)))
        }))
    }

    #[test]
    fn replay_with_empty_cache_misses_without_calling() {
        let t = echo();
        let c = LlmClient::new(
            cfg(Mode::Replay),
            Some(t.clone()),
            ResponseCache::in_memory(),
        );
        assert!(matches!(c.complete("hi"), Err(LlmError::CacheMiss { .. })));
        assert_eq!(t.calls(), 0);
    }

    #[test]
    fn record_then_replay_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let prompts: Vec<String> = (0..50).map(|i| format!("prompt {i}")).collect();
        let t = echo();
        let rec = LlmClient::new(
            cfg(Mode::Record),
            Some(t.clone()),
            ResponseCache::open(&path).unwrap(),
        );
        let a: Vec<String> = rec
            .complete_all(&prompts)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        assert_eq!(t.calls(), 50);
        drop(rec);
        let t2 = echo();
        let rep = LlmClient::new(
            cfg(Mode::Replay),
            Some(t2.clone()),
            ResponseCache::open(&path).unwrap(),
        );
        let b: Vec<String> = rep
            .complete_all(&prompts)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        assert_eq!(a, b);
        assert_eq!(t2.calls(), 0);
        assert_eq!(b[7], "re: prompt 7");
    }

    #[test]
    fn transient_failures_retry_up_to_three_times() {
        let t = Arc::new(FnTransport::new(|_: &ChatRequest| {
            Err(TransportError::Transient("503".into()))
        }));
        let c = LlmClient::new(cfg(Mode::Live), Some(t.clone()), ResponseCache::in_memory());
        assert_eq!(
            c.complete("x"),
            Err(LlmError::LlmUnavailable {
                attempts: 3,
                cause: "503".into()
            })
        );
        assert_eq!(t.calls(), 3);
    }

    #[test]
    fn truncated_responses_are_rejected() {
        let t = Arc::new(FnTransport::new(|_: &ChatRequest| {
            Ok(ChatResponse {
                content: "abc".into(),
                finish_reason: Some("length".into()),
            })
        }));
        let c = LlmClient::new(cfg(Mode::Live), Some(t), ResponseCache::in_memory());
        assert_eq!(c.complete("x"), Err(LlmError::ResponseTooLong));
    }

    #[test]
    fn keys_depend_on_every_request_field() {
        let c = LlmClient::new(cfg(Mode::Replay), None, ResponseCache::in_memory());
        let a = c.request("p");
        assert_eq!(a.cache_key(), c.request("p").cache_key());
        let mut b = a.clone();
        b.temperature = 0.3;
        assert_ne!(a.cache_key(), b.cache_key());
        b = a.clone();
        b.max_tokens += 1;
        assert_ne!(a.cache_key(), b.cache_key());
    }

    #[test]
    fn compaction_drops_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let line = |k: &str, r: &str| {
            serde_json::to_string(&CacheEntry {
                key: k.into(),
                response: r.into(),
                created_at: 0,
            })
            .unwrap()
        };
        std::fs::write(
            &path,
            format!(
                "{}\n{}\n{}\n",
                line("b", "1"),
                line("a", "2"),
                line("b", "3")
            ),
        )
        .unwrap();
        assert_eq!(compact_cache(&path).unwrap(), (2, 1));
        let cache = ResponseCache::open(&path).unwrap();
        assert_eq!(cache.get("b").as_deref(), Some("1"));
    }
}
