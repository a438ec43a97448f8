//! Chat-completion backends: a live HTTP client speaking the familiar
//! messages-array protocol, and a deterministic record/replay store so the
//! whole pipeline runs hermetically in tests.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::io::{BufRead, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
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
    pub fn new(model: impl Into<String>, system: impl Into<String>, user: impl Into<String>) -> Self {
        ChatRequest {
            model: model.into(),
            messages: vec![
                Message {
                    role: Role::System,
                    content: system.into(),
                },
                Message {
                    role: Role::User,
                    content: user.into(),
                },
            ],
            temperature: 0.0,
            max_tokens: 4096,
        }
    }

    /// Byte-exact canonical form used for digesting: one line per field in a
    /// fixed order, message contents length-prefixed so no content can forge
    /// a field boundary.
    pub fn canonicalize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"model=");
        out.extend_from_slice(self.model.as_bytes());
        out.push(b'\n');
        // Temperature and max_tokens use fixed decimal renderings so the
        // bytes cannot drift with float formatting defaults.
        out.extend_from_slice(format!("temperature={:.4}\n", self.temperature).as_bytes());
        out.extend_from_slice(format!("max_tokens={}\n", self.max_tokens).as_bytes());
        for m in &self.messages {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            out.extend_from_slice(format!("{role}:{}\n", m.content.len()).as_bytes());
            out.extend_from_slice(m.content.as_bytes());
            out.push(b'\n');
        }
        out
    }

    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonicalize());
        format!("{:x}", hasher.finalize())
    }

    /// First user-message content, used for replay-miss hints.
    pub fn user_prompt(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub request_digest: String,
    pub response: String,
    pub recorded_at: String,
    pub model: String,
    /// Prompt excerpt kept alongside the digest so a miss can point at the
    /// nearest stored prompt instead of an opaque hash.
    #[serde(default)]
    pub prompt_head: String,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend request failed: {0}")]
    Transport(String),
    #[error("backend returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("no replay record for digest {digest}; nearest stored prompt: {nearest_hint}")]
    ReplayMiss { digest: String, nearest_hint: String },
    #[error("replay store unreadable: {0}")]
    Store(String),
    #[error("scripted backend exhausted after {0} responses")]
    ScriptExhausted(usize),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError>;

    /// Human-readable tag for transcripts.
    fn name(&self) -> &'static str;
}

/// Live OpenAI-compatible HTTP client with bounded retry.
pub struct LiveBackend {
    pub endpoint: String,
    pub api_key: String,
    pub max_attempts: u32,
    client: reqwest::blocking::Client,
    /// Concurrent-request cap; acquired for the duration of each call.
    gate: std::sync::Arc<Semaphore>,
}

/// Minimal counting semaphore over a mutex + condvar; enough for a small
/// concurrent-request cap without pulling in an async runtime.
struct Semaphore {
    permits: Mutex<usize>,
    cv: std::sync::Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            permits: Mutex::new(n),
            cv: std::sync::Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut p = self.permits.lock().unwrap();
        while *p == 0 {
            p = self.cv.wait(p).unwrap();
        }
        *p -= 1;
    }

    fn release(&self) {
        *self.permits.lock().unwrap() += 1;
        self.cv.notify_one();
    }
}

impl LiveBackend {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, concurrency: usize) -> Self {
        LiveBackend {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            max_attempts: 3,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("http client"),
            gate: std::sync::Arc::new(Semaphore::new(concurrency.max(1))),
        }
    }

    fn post_once(&self, req: &ChatRequest) -> Result<String, BackendError> {
        #[derive(Serialize)]
        struct Body<'a> {
            model: &'a str,
            messages: &'a [Message],
            temperature: f64,
            max_tokens: u32,
        }
        #[derive(Deserialize)]
        struct Choice {
            message: Message,
        }
        #[derive(Deserialize)]
        struct Response {
            choices: Vec<Choice>,
        }

        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&Body {
                model: &req.model,
                messages: &req.messages,
                temperature: req.temperature,
                max_tokens: req.max_tokens,
            })
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;

        let status = resp.status().as_u16();
        let body = resp
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status, body });
        }
        let parsed: Response =
            serde_json::from_str(&body).map_err(|e| BackendError::Transport(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::Transport("response had no choices".into()))
    }
}

impl ChatBackend for LiveBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        self.gate.acquire();
        let result = (|| {
            let mut delay = Duration::from_millis(500);
            let mut last = None;
            for attempt in 1..=self.max_attempts {
                match self.post_once(req) {
                    Ok(text) => return Ok(text),
                    Err(e @ BackendError::Status { status, .. })
                        if status == 429 || status >= 500 =>
                    {
                        log::warn!("attempt {attempt} failed ({e}); retrying");
                        last = Some(e);
                    }
                    Err(e @ BackendError::Transport(_)) => {
                        log::warn!("attempt {attempt} failed ({e}); retrying");
                        last = Some(e);
                    }
                    Err(e) => return Err(e),
                }
                if attempt < self.max_attempts {
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
            Err(last.unwrap_or_else(|| BackendError::Transport("no attempts made".into())))
        })();
        self.gate.release();
        result
    }

    fn name(&self) -> &'static str {
        "live"
    }
}

/// Line-delimited JSON store of [`ReplayRecord`]s keyed by request digest.
pub struct ReplayStore {
    records: HashMap<String, ReplayRecord>,
}

impl ReplayStore {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let file = std::fs::File::open(path)
            .map_err(|e| BackendError::Store(format!("{}: {e}", path.display())))?;
        let mut records = HashMap::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| BackendError::Store(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ReplayRecord = serde_json::from_str(&line)
                .map_err(|e| BackendError::Store(format!("line {}: {e}", i + 1)))?;
            records.insert(record.request_digest.clone(), record);
        }
        Ok(ReplayStore { records })
    }

    pub fn empty() -> Self {
        ReplayStore {
            records: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn insert(&mut self, record: ReplayRecord) {
        self.records.insert(record.request_digest.clone(), record);
    }

    pub fn get(&self, digest: &str) -> Option<&ReplayRecord> {
        self.records.get(digest)
    }

    /// Stored record whose prompt excerpt shares the longest common prefix
    /// with `prompt`; drives the replay-miss hint.
    pub fn nearest_prompt(&self, prompt: &str) -> Option<&ReplayRecord> {
        self.records.values().max_by_key(|r| {
            r.prompt_head
                .bytes()
                .zip(prompt.bytes())
                .take_while(|(a, b)| a == b)
                .count()
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        let mut lines: Vec<&ReplayRecord> = self.records.values().collect();
        lines.sort_by(|a, b| a.request_digest.cmp(&b.request_digest));
        let mut file = std::fs::File::create(path)
            .map_err(|e| BackendError::Store(format!("{}: {e}", path.display())))?;
        for r in lines {
            let line = serde_json::to_string(r).map_err(|e| BackendError::Store(e.to_string()))?;
            writeln!(file, "{line}").map_err(|e| BackendError::Store(e.to_string()))?;
        }
        Ok(())
    }
}

fn prompt_head(prompt: &str) -> String {
    prompt.chars().take(120).collect()
}

/// Deterministic lookup backend; a miss is fatal and names the digest plus
/// the nearest stored prompt so fixture drift is diagnosable.
pub struct ReplayBackend {
    store: ReplayStore,
}

impl ReplayBackend {
    pub fn new(store: ReplayStore) -> Self {
        ReplayBackend { store }
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        Ok(ReplayBackend {
            store: ReplayStore::load(path)?,
        })
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let digest = req.digest();
        match self.store.get(&digest) {
            Some(r) => Ok(r.response.clone()),
            None => {
                let nearest_hint = self
                    .store
                    .nearest_prompt(req.user_prompt())
                    .map(|r| r.prompt_head.clone())
                    .unwrap_or_else(|| "<store empty>".into());
                Err(BackendError::ReplayMiss {
                    digest,
                    nearest_hint,
                })
            }
        }
    }

    fn name(&self) -> &'static str {
        "replay"
    }
}

/// Wraps another backend and persists every completion as a replay record.
pub struct RecordBackend<B: ChatBackend> {
    inner: B,
    path: PathBuf,
    store: Mutex<ReplayStore>,
}

impl<B: ChatBackend> RecordBackend<B> {
    pub fn new(inner: B, path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let store = ReplayStore::load(&path).unwrap_or_else(|_| ReplayStore::empty());
        RecordBackend {
            inner,
            path,
            store: Mutex::new(store),
        }
    }
}

impl<B: ChatBackend> ChatBackend for RecordBackend<B> {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let response = self.inner.complete(req)?;
        let mut store = self.store.lock().unwrap();
        store.insert(ReplayRecord {
            request_digest: req.digest(),
            response: response.clone(),
            recorded_at: now_utc(),
            model: req.model.clone(),
            prompt_head: prompt_head(req.user_prompt()),
        });
        store.save(&self.path)?;
        Ok(response)
    }

    fn name(&self) -> &'static str {
        "record"
    }
}

fn now_utc() -> String {
    // Seconds since the epoch; enough provenance for fixtures without a
    // date-time dependency.
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

/// Test backend answering from a queue of (prompt-substring, response) rules;
/// the first rule whose substring appears in the user prompt wins and is
/// consumed once `once` is set. Used to generate replay fixtures
/// programmatically.
pub struct ScriptedBackend {
    rules: Mutex<Vec<ScriptRule>>,
    calls: Mutex<Vec<ChatRequest>>,
}

pub struct ScriptRule {
    pub match_substring: String,
    pub response: String,
    /// Consume after first use; lets one prompt get different answers on
    /// successive rounds.
    pub once: bool,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        ScriptedBackend {
            rules: Mutex::new(rules),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<ChatRequest> {
        self.calls.lock().unwrap().clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        self.calls.lock().unwrap().push(req.clone());
        let prompt = req.user_prompt().to_string();
        let mut rules = self.rules.lock().unwrap();
        let idx = rules
            .iter()
            .position(|r| prompt.contains(&r.match_substring));
        match idx {
            Some(i) => {
                let response = rules[i].response.clone();
                if rules[i].once {
                    rules.remove(i);
                }
                Ok(response)
            }
            None => Err(BackendError::ScriptExhausted(rules.len())),
        }
    }

    fn name(&self) -> &'static str {
        "scripted"
    }
}
