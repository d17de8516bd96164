//! Chat backends: a remote HTTP client, a scripted replay backend for
//! offline runs, plus record/replay plumbing for authoring fixtures.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stage::StageKind;
use super::LlmError;

/// Counting semaphore bounding concurrent remote calls.
struct InFlightLimit {
    permits: Mutex<usize>,
    available: Condvar,
}

impl InFlightLimit {
    fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits.max(1)), available: Condvar::new() }
    }

    fn run<T>(&self, call: impl FnOnce() -> T) -> T {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        drop(permits);
        let result = call();
        *self.permits.lock().unwrap() += 1;
        self.available.notify_one();
        result
    }
}

/// Per-call parameters resolved by the gateway.
#[derive(Debug, Clone, Copy)]
pub struct CallParams {
    pub temperature: f32,
}

/// A raw backend response. Token counts are the backend's own usage metadata
/// when it reports any; the gateway falls back to a whitespace-token count
/// otherwise.
#[derive(Debug, Clone)]
pub struct BackendReply {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

pub trait LlmBackend: Send + Sync {
    /// Stable backend identity recorded in run manifests.
    fn id(&self) -> String;

    fn complete(
        &self,
        stage: StageKind,
        prompt: &str,
        params: &CallParams,
    ) -> Result<BackendReply, LlmError>;
}

pub fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(digest.len() * 2);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Configuration for [`RemoteChat`].
#[derive(Debug, Clone)]
pub struct RemoteChatConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Bearer token, if the endpoint requires one. Supply via environment,
    /// never from config files.
    pub api_token: Option<String>,
    /// Cap on concurrent requests; `None` leaves throughput to the caller.
    pub max_in_flight: Option<usize>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

/// HTTP chat client speaking the common `{"model", "messages", "temperature"}`
/// request shape with `choices[0].message.content` responses.
pub struct RemoteChat {
    config: RemoteChatConfig,
    client: reqwest::blocking::Client,
    limit: Option<InFlightLimit>,
}

impl RemoteChat {
    pub fn new(config: RemoteChatConfig) -> Self {
        let limit = config.max_in_flight.map(InFlightLimit::new);
        Self { config, client: reqwest::blocking::Client::new(), limit }
    }

    fn request(&self, prompt: &str, params: &CallParams) -> Result<BackendReply, LlmError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![ChatMessage { role: "user", content: prompt }],
            temperature: params.temperature,
        };
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(token) = &self.config.api_token {
            request = request.bearer_auth(token);
        }
        let response =
            request.send().map_err(|e| LlmError::Transport { message: e.to_string() })?;
        if !response.status().is_success() {
            return Err(LlmError::Transport {
                message: format!("chat endpoint returned {}", response.status()),
            });
        }
        let parsed: ChatResponse =
            response.json().map_err(|e| LlmError::Transport { message: e.to_string() })?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::Transport { message: "response carried no choices".into() })?;
        let (prompt_tokens, completion_tokens) = match parsed.usage {
            Some(usage) => (usage.prompt_tokens, usage.completion_tokens),
            None => (None, None),
        };
        Ok(BackendReply { text: choice.message.content, prompt_tokens, completion_tokens })
    }
}

impl LlmBackend for RemoteChat {
    fn id(&self) -> String {
        format!("remote-chat-{}", self.config.model)
    }

    fn complete(
        &self,
        _stage: StageKind,
        prompt: &str,
        params: &CallParams,
    ) -> Result<BackendReply, LlmError> {
        match &self.limit {
            Some(limit) => limit.run(|| self.request(prompt, params)),
            None => self.request(prompt, params),
        }
    }
}

/// One scripted exchange, keyed by stage and the SHA-256 of the rendered
/// prompt. This is also the on-disk fixture record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub stage: String,
    pub prompt_sha256: String,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

type FixtureKey = (String, String);

/// Deterministic replay backend. Responses are matched strictly on
/// (stage, prompt hash); an unmatched prompt raises a fixture-miss error so
/// a drifted test can never pass silently. Records sharing a key are served
/// in file order, and the last one repeats once the queue drains.
pub struct ScriptedBackend {
    records: Vec<FixtureRecord>,
    queues: Mutex<HashMap<FixtureKey, VecDeque<usize>>>,
    served: Mutex<HashMap<FixtureKey, usize>>,
}

impl ScriptedBackend {
    pub fn new(records: Vec<FixtureRecord>) -> Result<Self, LlmError> {
        let mut queues: HashMap<FixtureKey, VecDeque<usize>> = HashMap::new();
        for (position, record) in records.iter().enumerate() {
            if StageKind::from_name(&record.stage).is_none() {
                return Err(LlmError::Fixture(format!("unknown stage {:?}", record.stage)));
            }
            queues
                .entry((record.stage.clone(), record.prompt_sha256.clone()))
                .or_default()
                .push_back(position);
        }
        Ok(Self { records, queues: Mutex::new(queues), served: Mutex::new(HashMap::new()) })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new()).expect("no records to validate")
    }

    /// Script a response for the exact rendered prompt (hashing it here so
    /// tests never handle digests directly).
    pub fn respond(&mut self, stage: StageKind, prompt: &str, response: &str) {
        self.respond_record(FixtureRecord {
            stage: stage.name().to_string(),
            prompt_sha256: sha256_hex(prompt),
            response_text: response.to_string(),
            prompt_tokens: None,
            completion_tokens: None,
        });
    }

    pub fn respond_record(&mut self, record: FixtureRecord) {
        let key = (record.stage.clone(), record.prompt_sha256.clone());
        let position = self.records.len();
        self.records.push(record);
        self.queues.lock().unwrap().entry(key).or_default().push_back(position);
    }

    /// Load the newline-delimited fixture file format.
    pub fn load(reader: impl BufRead) -> Result<Self, LlmError> {
        let mut records = Vec::new();
        for (index, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| LlmError::Fixture(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: FixtureRecord = serde_json::from_str(&line).map_err(|e| {
                LlmError::Fixture(format!("fixture line {}: {e}", index + 1))
            })?;
            records.push(record);
        }
        Self::new(records)
    }

    pub fn save(&self, mut writer: impl Write) -> Result<(), LlmError> {
        for record in &self.records {
            let line = serde_json::to_string(record).expect("serializable");
            writeln!(writer, "{line}").map_err(|e| LlmError::Fixture(e.to_string()))?;
        }
        Ok(())
    }

    /// Reset replay cursors so the same backend can serve another identical
    /// run from the top.
    pub fn rewind(&self) {
        let mut queues = self.queues.lock().unwrap();
        queues.clear();
        for (position, record) in self.records.iter().enumerate() {
            queues
                .entry((record.stage.clone(), record.prompt_sha256.clone()))
                .or_default()
                .push_back(position);
        }
        self.served.lock().unwrap().clear();
    }
}

impl LlmBackend for ScriptedBackend {
    fn id(&self) -> String {
        "scripted".to_string()
    }

    fn complete(
        &self,
        stage: StageKind,
        prompt: &str,
        _params: &CallParams,
    ) -> Result<BackendReply, LlmError> {
        let key = (stage.name().to_string(), sha256_hex(prompt));
        let position = {
            let mut queues = self.queues.lock().unwrap();
            match queues.get_mut(&key).and_then(VecDeque::pop_front) {
                Some(position) => {
                    self.served.lock().unwrap().insert(key, position);
                    position
                }
                None => *self.served.lock().unwrap().get(&key).ok_or(LlmError::FixtureMiss {
                    stage: stage.name(),
                    sha256: key.1.clone(),
                })?,
            }
        };
        let record = &self.records[position];
        Ok(BackendReply {
            text: record.response_text.clone(),
            prompt_tokens: record.prompt_tokens,
            completion_tokens: record.completion_tokens,
        })
    }
}

/// Wraps any backend and captures every exchange as a fixture record, so a
/// live (or rule-driven) run can be replayed offline later.
pub struct RecordingBackend<B> {
    inner: B,
    records: Mutex<Vec<FixtureRecord>>,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, records: Mutex::new(Vec::new()) }
    }

    pub fn fixtures(&self) -> Vec<FixtureRecord> {
        self.records.lock().unwrap().clone()
    }

    pub fn save(&self, mut writer: impl Write) -> Result<(), LlmError> {
        for record in self.records.lock().unwrap().iter() {
            let line = serde_json::to_string(record).expect("serializable");
            writeln!(writer, "{line}").map_err(|e| LlmError::Fixture(e.to_string()))?;
        }
        Ok(())
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn id(&self) -> String {
        format!("recording({})", self.inner.id())
    }

    fn complete(
        &self,
        stage: StageKind,
        prompt: &str,
        params: &CallParams,
    ) -> Result<BackendReply, LlmError> {
        let reply = self.inner.complete(stage, prompt, params)?;
        self.records.lock().unwrap().push(FixtureRecord {
            stage: stage.name().to_string(),
            prompt_sha256: sha256_hex(prompt),
            response_text: reply.text.clone(),
            prompt_tokens: reply.prompt_tokens,
            completion_tokens: reply.completion_tokens,
        });
        Ok(reply)
    }
}

/// A backend driven by a plain function, handy for authoring fixtures: wrap
/// it in a [`RecordingBackend`], run once, and replay the recording through
/// a [`ScriptedBackend`]. Returning `None` raises a fixture miss.
pub struct RuleBackend<F> {
    rule: F,
}

impl<F> RuleBackend<F>
where
    F: Fn(StageKind, &str) -> Option<String> + Send + Sync,
{
    pub fn new(rule: F) -> Self {
        Self { rule }
    }
}

impl<F> LlmBackend for RuleBackend<F>
where
    F: Fn(StageKind, &str) -> Option<String> + Send + Sync,
{
    fn id(&self) -> String {
        "rule".to_string()
    }

    fn complete(
        &self,
        stage: StageKind,
        prompt: &str,
        _params: &CallParams,
    ) -> Result<BackendReply, LlmError> {
        match (self.rule)(stage, prompt) {
            Some(text) => Ok(BackendReply { text, prompt_tokens: None, completion_tokens: None }),
            None => Err(LlmError::FixtureMiss { stage: stage.name(), sha256: sha256_hex(prompt) }),
        }
    }
}
