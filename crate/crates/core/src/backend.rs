//! Chat-completion abstraction and per-stage model profiles.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

/// The four model-backed analysis stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Submodule {
    RootErrorAnalysis,
    BugDiagnosis,
    BugSummarization,
    DuplicateDetection,
}

impl Submodule {
    pub const ALL: [Submodule; 4] = [
        Submodule::RootErrorAnalysis,
        Submodule::BugDiagnosis,
        Submodule::BugSummarization,
        Submodule::DuplicateDetection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Submodule::RootErrorAnalysis => "root_error_analysis",
            Submodule::BugDiagnosis => "bug_diagnosis",
            Submodule::BugSummarization => "bug_summarization",
            Submodule::DuplicateDetection => "duplicate_detection",
        }
    }

    pub fn default_model(self) -> &'static str {
        match self {
            Submodule::RootErrorAnalysis => "DeepSeek-Coder-7b-instruct",
            Submodule::BugDiagnosis => "Mistral-7B-Instruct",
            Submodule::BugSummarization | Submodule::DuplicateDetection => "CodeLlama-7b-Instruct",
        }
    }

    pub fn default_max_tokens(self) -> u32 {
        match self {
            Submodule::RootErrorAnalysis => 64,
            Submodule::BugDiagnosis => 128,
            Submodule::BugSummarization => 512,
            Submodule::DuplicateDetection => 32,
        }
    }
}

impl fmt::Display for Submodule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Model and generation parameters for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub submodule: Submodule,
    pub model_name: String,
    /// Base URL of the chat-completion endpoint.
    pub endpoint: String,
    #[serde(default)]
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    200
}

impl ModelProfile {
    pub fn default_for(submodule: Submodule, endpoint: impl Into<String>) -> Self {
        Self {
            submodule,
            model_name: submodule.default_model().into(),
            endpoint: endpoint.into(),
            temperature: 0.0,
            max_tokens: submodule.default_max_tokens(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    /// Delay before retry number `attempt` (1-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(16);
        Duration::from_millis(self.backoff_ms.saturating_mul(factor))
    }

    /// Upper bound on wall time spent in one `complete` call.
    pub fn time_budget(&self) -> Duration {
        let attempts = self.retries + 1;
        let mut budget = self.timeout() * attempts;
        for attempt in 1..attempts {
            budget += self.backoff(attempt);
        }
        budget
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProfileError {
    #[error("no model profile configured for `{0}`")]
    Missing(Submodule),
    #[error("more than one model profile configured for `{0}`")]
    Duplicate(Submodule),
    #[error("profile `{submodule}`: {message}")]
    Invalid {
        submodule: Submodule,
        message: String,
    },
}

/// Exactly one profile per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profiles {
    pub root_error_analysis: ModelProfile,
    pub bug_diagnosis: ModelProfile,
    pub bug_summarization: ModelProfile,
    pub duplicate_detection: ModelProfile,
}

impl Profiles {
    /// Default models and parameters, all pointing at one endpoint.
    pub fn defaults(endpoint: &str) -> Self {
        Self {
            root_error_analysis: ModelProfile::default_for(Submodule::RootErrorAnalysis, endpoint),
            bug_diagnosis: ModelProfile::default_for(Submodule::BugDiagnosis, endpoint),
            bug_summarization: ModelProfile::default_for(Submodule::BugSummarization, endpoint),
            duplicate_detection: ModelProfile::default_for(Submodule::DuplicateDetection, endpoint),
        }
    }

    /// Builds the set from a flat list; every stage must appear exactly once.
    pub fn from_list(list: Vec<ModelProfile>) -> Result<Self, ProfileError> {
        let mut slots: [Option<ModelProfile>; 4] = [None, None, None, None];
        for profile in list {
            validate(&profile)?;
            let i = Submodule::ALL
                .iter()
                .position(|s| *s == profile.submodule)
                .expect("ALL covers every variant");
            if slots[i].is_some() {
                return Err(ProfileError::Duplicate(profile.submodule));
            }
            slots[i] = Some(profile);
        }
        let [a, b, c, d] = slots;
        Ok(Self {
            root_error_analysis: a.ok_or(ProfileError::Missing(Submodule::RootErrorAnalysis))?,
            bug_diagnosis: b.ok_or(ProfileError::Missing(Submodule::BugDiagnosis))?,
            bug_summarization: c.ok_or(ProfileError::Missing(Submodule::BugSummarization))?,
            duplicate_detection: d.ok_or(ProfileError::Missing(Submodule::DuplicateDetection))?,
        })
    }

    pub fn get(&self, submodule: Submodule) -> &ModelProfile {
        match submodule {
            Submodule::RootErrorAnalysis => &self.root_error_analysis,
            Submodule::BugDiagnosis => &self.bug_diagnosis,
            Submodule::BugSummarization => &self.bug_summarization,
            Submodule::DuplicateDetection => &self.duplicate_detection,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModelProfile> {
        Submodule::ALL.into_iter().map(move |s| self.get(s))
    }
}

fn validate(p: &ModelProfile) -> Result<(), ProfileError> {
    let invalid = |message: &str| ProfileError::Invalid {
        submodule: p.submodule,
        message: message.into(),
    };
    if p.model_name.is_empty() {
        return Err(invalid("model_name is empty"));
    }
    if p.temperature.is_nan() || p.temperature < 0.0 {
        return Err(invalid("temperature must be >= 0"));
    }
    if p.max_tokens == 0 {
        return Err(invalid("max_tokens must be > 0"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub model_name: String,
    /// Wall time of the successful attempt, in microseconds.
    pub latency_us: u64,
    /// The backend stopped on its token limit.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("backend returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    pub fn is_unavailable(&self) -> bool {
        matches!(self, BackendError::Unavailable { .. })
    }
}

/// A chat-completion engine.
pub trait ChatBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        profile: &ModelProfile,
    ) -> Result<CompletionResult, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(
        &self,
        messages: &[ChatMessage],
        profile: &ModelProfile,
    ) -> Result<CompletionResult, BackendError> {
        (**self).complete(messages, profile)
    }
}

/// Checks the conversation shape every backend requires.
pub fn check_conversation(messages: &[ChatMessage]) -> Result<(), BackendError> {
    match messages.first() {
        None => return Err(BackendError::InvalidRequest("no messages".into())),
        Some(m) if m.role == Role::Assistant => {
            return Err(BackendError::InvalidRequest(
                "conversation must start with a system or user message".into(),
            ))
        }
        _ => {}
    }
    if messages.iter().any(|m| m.content.is_empty()) {
        return Err(BackendError::InvalidRequest("empty message content".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn default_models_per_stage() {
        let p = Profiles::defaults("http://localhost:8000/v1");
        assert_eq!(
            p.root_error_analysis.model_name,
            "DeepSeek-Coder-7b-instruct"
        );
        assert_eq!(p.bug_diagnosis.model_name, "Mistral-7B-Instruct");
        assert_eq!(p.bug_summarization.model_name, "CodeLlama-7b-Instruct");
        assert_eq!(p.duplicate_detection.model_name, "CodeLlama-7b-Instruct");
        assert!(p.iter().all(|m| m.temperature == 0.0));
        let tokens: Vec<u32> = p.iter().map(|m| m.max_tokens).collect();
        assert_eq!(tokens, [64, 128, 512, 32]);
    }

    #[test]
    fn missing_profile_fails() {
        let d = Profiles::defaults("http://x");
        let err = Profiles::from_list(vec![
            d.root_error_analysis.clone(),
            d.bug_diagnosis.clone(),
            d.duplicate_detection.clone(),
        ])
        .unwrap_err();
        assert_eq!(err, ProfileError::Missing(Submodule::BugSummarization));
        let err = Profiles::from_list(vec![
            d.root_error_analysis.clone(),
            d.root_error_analysis.clone(),
        ])
        .unwrap_err();
        assert_eq!(err, ProfileError::Duplicate(Submodule::RootErrorAnalysis));
    }

    #[test]
    fn time_budget_includes_backoff() {
        let mut p = ModelProfile::default_for(Submodule::BugDiagnosis, "http://x");
        p.timeout_ms = 1000;
        p.retries = 2;
        p.backoff_ms = 100;
        // 3 attempts plus 100ms and 200ms of backoff
        assert_eq!(p.time_budget(), Duration::from_millis(3300));
    }

    #[test]
    fn conversation_shape() {
        assert!(check_conversation(&[]).is_err());
        assert!(check_conversation(&[ChatMessage::assistant("x")]).is_err());
        assert!(check_conversation(&[ChatMessage::user("")]).is_err());
        assert!(check_conversation(&[ChatMessage::user("hi")]).is_ok());
    }
}
