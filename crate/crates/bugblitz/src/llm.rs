//! Chat-completion backends for the service: the HTTP client, the
//! configured backend switch and a call recorder for tests.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::time::{Duration, Instant};

use bugblitz_core::backend::check_conversation;
use bugblitz_core::{
    BackendError, ChatBackend, ChatMessage, CompletionResult, MockBackend, ModelProfile, Submodule,
};
use serde::{Deserialize, Serialize};

pub const API_KEY_ENV: &str = "BUGBLITZ_LLM_API_KEY";

const BODY_EXCERPT: usize = 300;

/// Counting gate limiting concurrent completions to one endpoint.
#[derive(Debug)]
pub struct Gate {
    max: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a Gate);

impl Gate {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_use: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_use.lock().unwrap();
        while *n >= self.max {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }

    pub fn in_use(&self) -> usize {
        *self.in_use.lock().unwrap()
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_use.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    stream: bool,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireReply,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireReply {
    #[serde(default)]
    content: Option<String>,
}

fn role_name(m: &ChatMessage) -> &'static str {
    match m.role {
        bugblitz_core::Role::System => "system",
        bugblitz_core::Role::User => "user",
        bugblitz_core::Role::Assistant => "assistant",
    }
}

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT).collect()
}

/// Client for OpenAI-style `POST {endpoint}/chat/completions` servers.
pub struct RemoteBackend {
    api_key: Option<String>,
    max_in_flight: usize,
    gates: Mutex<HashMap<String, Arc<Gate>>>,
    // built on first use so construction is safe inside an async runtime
    client: OnceLock<reqwest::blocking::Client>,
}

impl RemoteBackend {
    pub fn new(api_key: Option<String>, max_in_flight: usize) -> Self {
        Self {
            api_key,
            max_in_flight,
            gates: Mutex::new(HashMap::new()),
            client: OnceLock::new(),
        }
    }

    pub fn from_env(max_in_flight: usize) -> Self {
        Self::new(
            std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            max_in_flight,
        )
    }

    pub fn gate(&self, endpoint: &str) -> Arc<Gate> {
        self.gates
            .lock()
            .unwrap()
            .entry(endpoint.to_string())
            .or_insert_with(|| Arc::new(Gate::new(self.max_in_flight)))
            .clone()
    }

    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(reqwest::blocking::Client::new)
    }

    fn attempt(
        &self,
        url: &str,
        body: &WireRequest<'_>,
        profile: &ModelProfile,
    ) -> Result<Result<CompletionResult, BackendError>, String> {
        let mut req = self
            .client()
            .post(url)
            .timeout(profile.timeout())
            .json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let started = Instant::now();
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        let text = resp.text().map_err(|e| e.to_string())?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(format!("status {}: {}", status.as_u16(), excerpt(&text)));
        }
        if !status.is_success() {
            return Ok(Err(BackendError::Status {
                status: status.as_u16(),
                body: excerpt(&text),
            }));
        }
        let parsed: WireResponse = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => return Ok(Err(BackendError::Protocol(e.to_string()))),
        };
        let Some(choice) = parsed.choices.into_iter().next() else {
            return Ok(Err(BackendError::Protocol(
                "response has no choices".into(),
            )));
        };
        Ok(Ok(CompletionResult {
            text: choice.message.content.unwrap_or_default(),
            model_name: profile.model_name.clone(),
            latency_us: started.elapsed().as_micros() as u64,
            truncated: choice.finish_reason.as_deref() == Some("length"),
        }))
    }
}

impl ChatBackend for RemoteBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        profile: &ModelProfile,
    ) -> Result<CompletionResult, BackendError> {
        check_conversation(messages)?;
        let url = format!(
            "{}/chat/completions",
            profile.endpoint.trim_end_matches('/')
        );
        let body = WireRequest {
            model: &profile.model_name,
            messages: messages
                .iter()
                .map(|m| WireMessage {
                    role: role_name(m),
                    content: &m.content,
                })
                .collect(),
            temperature: profile.temperature,
            max_tokens: profile.max_tokens,
            stream: false,
        };
        let gate = self.gate(&profile.endpoint);
        let attempts = profile.retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(profile.backoff(attempt - 1));
            }
            let _permit = gate.acquire();
            match self.attempt(&url, &body, profile) {
                Ok(result) => return result,
                Err(transient) => last = transient,
            }
        }
        Err(BackendError::Unavailable {
            attempts,
            message: last,
        })
    }
}

/// The backend selected by configuration.
pub enum Backend {
    Mock(MockBackend),
    Remote(RemoteBackend),
}

impl ChatBackend for Backend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        profile: &ModelProfile,
    ) -> Result<CompletionResult, BackendError> {
        match self {
            Backend::Mock(m) => m.complete(messages, profile),
            Backend::Remote(r) => r.complete(messages, profile),
        }
    }
}

/// One completion request seen by a [`RecordingBackend`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallRecord {
    pub submodule: Submodule,
    pub messages: Vec<ChatMessage>,
    pub reply: Option<String>,
}

/// Wraps a backend and keeps every call, for assertions on prompts.
pub struct RecordingBackend<B> {
    inner: B,
    calls: Mutex<Vec<CallRecord>>,
}

impl<B> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().unwrap().clone()
    }

    pub fn calls_for(&self, submodule: Submodule) -> Vec<CallRecord> {
        self.calls()
            .into_iter()
            .filter(|c| c.submodule == submodule)
            .collect()
    }

    pub fn clear(&self) {
        self.calls.lock().unwrap().clear();
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(
        &self,
        messages: &[ChatMessage],
        profile: &ModelProfile,
    ) -> Result<CompletionResult, BackendError> {
        let result = self.inner.complete(messages, profile);
        self.calls.lock().unwrap().push(CallRecord {
            submodule: profile.submodule,
            messages: messages.to_vec(),
            reply: result.as_ref().ok().map(|r| r.text.clone()),
        });
        result
    }
}

/// Sends a one-message conversation to check that an endpoint answers.
pub fn probe(backend: &dyn ChatBackend, profile: &ModelProfile) -> Result<Duration, BackendError> {
    let mut quick = profile.clone();
    quick.retries = 0;
    quick.max_tokens = 1;
    let started = Instant::now();
    backend.complete(&[ChatMessage::user("ping")], &quick)?;
    Ok(started.elapsed())
}
