//! Chat-completion backends: OpenAI-compatible HTTP, transcript
//! record/replay, and a deterministic template mock.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use crate::retry::RetryPolicy;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// What the agent is asking for. Not sent over the wire.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    RefineNews,
    AnalysisOpen,
    AnalysisRound,
    UpdateNote,
}

/// Model settings recorded with every request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatSettings {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: usize,
}

impl Default for ChatSettings {
    fn default() -> Self {
        Self {
            model: "gpt-4o-2024-08-06".into(),
            temperature: 0.2,
            max_tokens: 1024,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChatRequest {
    pub kind: CallKind,
    pub settings: ChatSettings,
    pub messages: Vec<ChatMessage>,
    /// Unformatted template inputs; lets the mock answer without parsing prompts.
    pub context: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    temperature: f64,
    max_tokens: usize,
    messages: &'a [ChatMessage],
}

impl ChatRequest {
    fn wire(&self) -> WireRequest<'_> {
        WireRequest {
            model: &self.settings.model,
            temperature: self.settings.temperature,
            max_tokens: self.settings.max_tokens,
            messages: &self.messages,
        }
    }

    /// SHA-256 of the wire payload; the transcript key.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.wire()).expect("request serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn last_user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ChatError {
    #[error("chat backend unreachable after {attempts} attempt(s): {msg}")]
    Transport { attempts: u32, msg: String },
    #[error("chat backend protocol error: {0}")]
    Protocol(String),
    #[error("no recorded response for request {0}")]
    ReplayMiss(String),
    #[error("transcript: {0}")]
    Transcript(String),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError>;

    /// Short label written to run metadata.
    fn describe(&self) -> String;
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

/// OpenAI-compatible `chat/completions` endpoint.
pub struct HttpChatBackend {
    url: String,
    key: Option<String>,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(url: impl Into<String>, key: Option<String>, retry: RetryPolicy) -> Result<Self, ChatError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| ChatError::Transport {
                attempts: 0,
                msg: e.to_string(),
            })?;
        Ok(Self {
            url: url.into(),
            key,
            retry,
            client,
        })
    }

    /// Read `AAPM_LLM_URL` / `AAPM_LLM_KEY`; `None` when the URL is unset.
    pub fn from_env(retry: RetryPolicy) -> Option<Result<Self, ChatError>> {
        let url = std::env::var("AAPM_LLM_URL").ok().filter(|u| !u.is_empty())?;
        let key = std::env::var("AAPM_LLM_KEY").ok().filter(|k| !k.is_empty());
        Some(Self::new(url, key, retry))
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        let body = request.wire();
        let resp = self
            .retry
            .run(|| {
                let mut req = self.client.post(&self.url).json(&body);
                if let Some(k) = &self.key {
                    req = req.bearer_auth(k);
                }
                let resp = req.send().map_err(|e| e.to_string())?;
                let status = resp.status();
                if status.is_server_error() || status.as_u16() == 429 {
                    return Err(format!("HTTP {status}"));
                }
                Ok(resp)
            })
            .map_err(|(attempts, msg)| ChatError::Transport { attempts, msg })?;
        if !resp.status().is_success() {
            return Err(ChatError::Protocol(format!("HTTP {}", resp.status())));
        }
        let parsed: CompletionResponse = resp.json().map_err(|e| ChatError::Protocol(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ChatError::Protocol("response has no message content".into()))
    }

    fn describe(&self) -> String {
        format!("http:{}", self.url)
    }
}

/// One line of a transcript file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_hash: String,
    pub response: String,
}

/// Forwards to an inner backend and appends every exchange to a JSONL file.
pub struct TranscriptRecorder<B> {
    inner: B,
    file: Mutex<File>,
}

impl<B: ChatBackend> TranscriptRecorder<B> {
    pub fn create(inner: B, path: &Path) -> Result<Self, ChatError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ChatError::Transcript(format!("{}: {e}", path.display())))?;
        Ok(Self {
            inner,
            file: Mutex::new(file),
        })
    }
}

impl<B: ChatBackend> ChatBackend for TranscriptRecorder<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        let response = self.inner.complete(request)?;
        let line = serde_json::to_string(&TranscriptEntry {
            request_hash: request.hash(),
            response: response.clone(),
        })
        .expect("transcript entry serializes");
        let mut f = self.file.lock().expect("transcript lock");
        writeln!(f, "{line}").map_err(|e| ChatError::Transcript(e.to_string()))?;
        Ok(response)
    }

    fn describe(&self) -> String {
        format!("record({})", self.inner.describe())
    }
}

/// Serves responses from a transcript by request hash. Repeated identical
/// requests are answered in recording order.
pub struct TranscriptReplayer {
    responses: Mutex<HashMap<String, VecDeque<String>>>,
    source: String,
}

impl TranscriptReplayer {
    pub fn open(path: &Path) -> Result<Self, ChatError> {
        let err = |e: std::io::Error| ChatError::Transcript(format!("{}: {e}", path.display()));
        let reader = BufReader::new(File::open(path).map_err(err)?);
        let mut responses: HashMap<String, VecDeque<String>> = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(err)?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(&line)
                .map_err(|e| ChatError::Transcript(format!("{}:{}: {e}", path.display(), i + 1)))?;
            responses
                .entry(entry.request_hash)
                .or_default()
                .push_back(entry.response);
        }
        Ok(Self {
            responses: Mutex::new(responses),
            source: path.display().to_string(),
        })
    }
}

impl ChatBackend for TranscriptReplayer {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        let hash = request.hash();
        self.responses
            .lock()
            .expect("replay lock")
            .get_mut(&hash)
            .and_then(|q| q.pop_front())
            .ok_or(ChatError::ReplayMiss(hash))
    }

    fn describe(&self) -> String {
        format!("replay:{}", self.source)
    }
}

/// Marker that makes the mock call the skip function.
pub const MOCK_SKIP_MARKER: &str = "[no-investment-content]";

/// Deterministic backend that answers from the request's template inputs.
///
/// * refine: `[REFINED] <title>. <body>`
/// * opening round: `{"action":"skip"}` when the news holds the skip marker,
///   otherwise a JSON report quoting the refined news
/// * later rounds: previous report plus a `[round i: n references]` line
/// * note update: previous note plus `[<news id>] <report head>`, keeping the
///   most recent lines only
///
/// Every request is logged for inspection.
pub struct MockChatBackend {
    skip_marker: Option<String>,
    max_note_lines: usize,
    log: Mutex<Vec<ChatRequest>>,
}

impl Default for MockChatBackend {
    fn default() -> Self {
        Self {
            skip_marker: Some(MOCK_SKIP_MARKER.into()),
            max_note_lines: 40,
            log: Mutex::new(Vec::new()),
        }
    }
}

impl MockChatBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_skip_marker(mut self, marker: Option<String>) -> Self {
        self.skip_marker = marker;
        self
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("mock log").clone()
    }

    pub fn count(&self, kind: CallKind) -> usize {
        self.log
            .lock()
            .expect("mock log")
            .iter()
            .filter(|r| r.kind == kind)
            .count()
    }

    pub fn total_calls(&self) -> usize {
        self.log.lock().expect("mock log").len()
    }

    fn ctx<'a>(request: &'a ChatRequest, key: &str) -> &'a str {
        request.context.get(key).map_or("", String::as_str)
    }
}

fn truncate_chars(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl ChatBackend for MockChatBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        self.log.lock().expect("mock log").push(request.clone());
        let limit = request.settings.max_tokens.max(1) * 4;
        let reply = match request.kind {
            CallKind::RefineNews => format!(
                "[REFINED] {}. {}",
                Self::ctx(request, "title"),
                Self::ctx(request, "body")
            ),
            CallKind::AnalysisOpen => {
                let news = Self::ctx(request, "refined");
                let skip = self.skip_marker.as_deref().is_some_and(|m| news.contains(m));
                if skip {
                    serde_json::json!({ "action": "skip" }).to_string()
                } else {
                    let text = format!("Analysis report: {news}");
                    return Ok(serde_json::json!({
                        "action": "report",
                        "text": truncate_chars(&text, limit),
                    })
                    .to_string());
                }
            }
            CallKind::AnalysisRound => format!(
                "{}\n[round {}: {} references]",
                Self::ctx(request, "report"),
                Self::ctx(request, "round"),
                Self::ctx(request, "n_retrieved"),
            ),
            CallKind::UpdateNote => {
                let head = truncate_chars(Self::ctx(request, "report"), 60).replace('\n', " ");
                let mut lines: Vec<&str> = Self::ctx(request, "macro").lines().collect();
                let entry = format!("[{}] {}", Self::ctx(request, "news_id"), head);
                lines.push(&entry);
                let keep = lines.len().saturating_sub(self.max_note_lines);
                lines[keep..].join("\n")
            }
        };
        Ok(truncate_chars(&reply, limit).to_string())
    }

    fn describe(&self) -> String {
        "mock".into()
    }
}

/// Backend that fails every call; used to exercise failure paths.
#[derive(Default)]
pub struct FailingBackend;

impl ChatBackend for FailingBackend {
    fn complete(&self, _request: &ChatRequest) -> Result<String, ChatError> {
        Err(ChatError::Transport {
            attempts: 3,
            msg: "connection refused".into(),
        })
    }

    fn describe(&self) -> String {
        "failing".into()
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for &T {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        (**self).complete(request)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Box<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        (**self).complete(request)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}
