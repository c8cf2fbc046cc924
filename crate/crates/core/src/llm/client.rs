//! Chat-completion clients and the append-only response cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::seed::sha256_hex;

pub const API_KEY_ENV: &str = "LLM4GRN_API_KEY";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<Message>,
}

impl ChatRequest {
    /// Stable hex digest of (model, temperature, messages).
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("request serializes");
        sha256_hex(canonical.as_bytes())
    }
}

/// One recorded request/response pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub digest: String,
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<Message>,
    pub response: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl ChatExchange {
    pub fn new(req: &ChatRequest, response: String) -> Self {
        Self {
            digest: req.digest(),
            model: req.model.clone(),
            temperature: req.temperature,
            messages: req.messages.clone(),
            response,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError>;
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub endpoint: String,
    pub timeout_secs: u64,
    pub max_attempts: usize,
    pub backoff_base_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            timeout_secs: 120,
            max_attempts: 6,
            backoff_base_ms: 500,
        }
    }
}

/// OpenAI-compatible chat-completion endpoint.
pub struct HttpChatClient {
    agent: ureq::Agent,
    cfg: HttpConfig,
    api_key: Option<String>,
}

impl HttpChatClient {
    /// Reads the API key from `LLM4GRN_API_KEY` when set.
    pub fn new(cfg: HttpConfig) -> Self {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_key(cfg, api_key)
    }

    pub fn with_key(cfg: HttpConfig, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self { agent, cfg, api_key }
    }

    fn attempt(&self, req: &ChatRequest) -> Result<String, (bool, String)> {
        let mut call = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call.send_json(req).map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err((true, format!("HTTP {status}")));
        }
        if status >= 400 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err((false, format!("HTTP {status}: {body}")));
        }
        let json: serde_json::Value = resp.body_mut().read_json().map_err(|e| (false, e.to_string()))?;
        json["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| (false, "response has no choices[0].message.content".to_string()))
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let attempts = self.cfg.max_attempts.max(1);
        let mut last = String::new();
        for i in 0..attempts {
            match self.attempt(req) {
                Ok(text) => return Ok(text),
                Err((retryable, msg)) => {
                    if !retryable {
                        return Err(LlmError::Client(msg));
                    }
                    log::warn!("chat request failed ({msg}), attempt {}/{attempts}", i + 1);
                    last = msg;
                    if i + 1 < attempts {
                        std::thread::sleep(Duration::from_millis(self.cfg.backoff_base_ms << i.min(10)));
                    }
                }
            }
        }
        Err(LlmError::Client(format!("{last} after {attempts} attempts")))
    }
}

/// Wraps a closure; used for scripted clients in tests.
pub struct FnClient<F> {
    f: F,
    calls: AtomicUsize,
}

impl<F> FnClient<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> ChatClient for FnClient<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(req)
    }
}

fn read_exchanges(path: &Path) -> Result<Vec<ChatExchange>, LlmError> {
    let file = File::open(path).map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LlmError::Cache(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: ChatExchange = serde_json::from_str(&line)
            .map_err(|e| LlmError::Cache(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(ex);
    }
    Ok(out)
}

/// Replays recorded exchanges; never touches the network.
pub struct FixtureClient {
    responses: HashMap<String, String>,
}

impl FixtureClient {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        Ok(Self::from_exchanges(read_exchanges(path.as_ref())?))
    }

    pub fn from_exchanges(exchanges: impl IntoIterator<Item = ChatExchange>) -> Self {
        let mut responses = HashMap::new();
        for ex in exchanges {
            responses.entry(ex.digest).or_insert(ex.response);
        }
        Self { responses }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ChatClient for FixtureClient {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let d = req.digest();
        self.responses
            .get(&d)
            .cloned()
            .ok_or_else(|| LlmError::Client(format!("no recorded response for request {d}")))
    }
}

/// Append-only JSONL log of exchanges keyed by request digest.
pub struct ResponseCache {
    path: PathBuf,
    inner: Mutex<(HashMap<String, String>, File)>,
}

impl ResponseCache {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let path = path.into();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| LlmError::Cache(e.to_string()))?;
        }
        let mut map = HashMap::new();
        if path.exists() {
            for ex in read_exchanges(&path)? {
                map.entry(ex.digest).or_insert(ex.response);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
        Ok(Self { path, inner: Mutex::new((map, file)) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, digest: &str) -> Option<String> {
        self.inner.lock().unwrap().0.get(digest).cloned()
    }

    pub fn append(&self, ex: &ChatExchange) -> Result<(), LlmError> {
        let line = serde_json::to_string(ex).map_err(|e| LlmError::Cache(e.to_string()))?;
        let mut guard = self.inner.lock().unwrap();
        let (map, file) = &mut *guard;
        if map.contains_key(&ex.digest) {
            return Ok(());
        }
        writeln!(file, "{line}")
            .and_then(|_| file.flush())
            .map_err(|e| LlmError::Cache(e.to_string()))?;
        map.insert(ex.digest.clone(), ex.response.clone());
        Ok(())
    }
}

/// Serves cache hits locally and records every upstream response before it
/// is returned. Without an upstream client a miss is an error.
pub struct CachedClient {
    cache: ResponseCache,
    upstream: Option<Box<dyn ChatClient>>,
    requests: AtomicUsize,
}

impl CachedClient {
    pub fn new(cache: ResponseCache, upstream: Option<Box<dyn ChatClient>>) -> Self {
        Self { cache, upstream, requests: AtomicUsize::new(0) }
    }

    /// Number of requests forwarded upstream.
    pub fn upstream_requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }
}

impl ChatClient for CachedClient {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let digest = req.digest();
        if let Some(hit) = self.cache.get(&digest) {
            return Ok(hit);
        }
        let upstream = self
            .upstream
            .as_ref()
            .ok_or_else(|| LlmError::Client(format!("offline and request {digest} is not cached")))?;
        self.requests.fetch_add(1, Ordering::SeqCst);
        let text = upstream.complete(req)?;
        self.cache.append(&ChatExchange::new(req, text.clone()))?;
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(content: &str) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            temperature: 0.0,
            messages: vec![Message::user(content)],
        }
    }

    #[test]
    fn digest_depends_on_every_field() {
        let a = req("x");
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.temperature = 0.5;
        assert_ne!(a.digest(), b.digest());
        let mut c = a.clone();
        c.model = "n".into();
        assert_ne!(a.digest(), c.digest());
        assert_ne!(a.digest(), req("y").digest());
    }

    #[test]
    fn cache_records_and_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let up = FnClient::new(|r: &ChatRequest| Ok(format!("echo {}", r.messages[0].content)));
        let c = CachedClient::new(ResponseCache::open(&path).unwrap(), Some(Box::new(up)));
        assert_eq!(c.complete(&req("a")).unwrap(), "echo a");
        assert_eq!(c.complete(&req("a")).unwrap(), "echo a");
        assert_eq!(c.upstream_requests(), 1);
        drop(c);

        let offline = CachedClient::new(ResponseCache::open(&path).unwrap(), None);
        assert_eq!(offline.complete(&req("a")).unwrap(), "echo a");
        assert!(offline.complete(&req("b")).is_err());
        assert_eq!(offline.upstream_requests(), 0);

        let fixture = FixtureClient::load(&path).unwrap();
        assert_eq!(fixture.len(), 1);
        assert_eq!(fixture.complete(&req("a")).unwrap(), "echo a");
    }

    #[test]
    fn upstream_failure_is_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let up = FnClient::new(|_: &ChatRequest| Err(LlmError::Client("down".into())));
        let c = CachedClient::new(ResponseCache::open(&path).unwrap(), Some(Box::new(up)));
        assert!(c.complete(&req("a")).is_err());
        assert!(c.cache().is_empty());
    }

    #[test]
    fn concurrent_appends_stay_line_delimited() {
        use rayon::prelude::*;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let up = FnClient::new(|r: &ChatRequest| Ok(r.messages[0].content.repeat(50)));
        let c = CachedClient::new(ResponseCache::open(&path).unwrap(), Some(Box::new(up)));
        (0..64).into_par_iter().for_each(|i| {
            c.complete(&req(&i.to_string())).unwrap();
        });
        assert_eq!(read_exchanges(&path).unwrap().len(), 64);
    }
}
