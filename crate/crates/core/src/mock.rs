//! Deterministic keyword-rule chat backend for hermetic runs.
//!
//! The mock answers according to the stage named by the profile's
//! `submodule`. The first rule (in table order) for that stage whose keyword
//! occurs in the inspected text decides the reply; otherwise a per-stage
//! default is synthesized. It keeps no state, so identical conversations
//! always produce identical completions.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::{
    check_conversation, BackendError, ChatBackend, ChatMessage, CompletionResult, ModelProfile,
    Role, Submodule,
};
use crate::prompts::SECOND_REPORT_MARKER;
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockReply {
    /// Sent back verbatim.
    Text { text: String },
    /// Root analysis: pick this error number.
    Index { index: usize },
    /// Diagnosis: product bug.
    Bug,
    /// Diagnosis: test-environment issue.
    NotBug,
    /// Duplicate detection: same defect.
    Duplicate,
    /// Duplicate detection: different defects.
    Distinct,
    /// Summarization: this summary/description pair in a fenced block.
    Summary {
        summary: String,
        description: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    pub submodule: Submodule,
    pub keyword: String,
    #[serde(flatten)]
    pub reply: MockReply,
}

impl MockRule {
    pub fn new(submodule: Submodule, keyword: impl Into<String>, reply: MockReply) -> Self {
        Self {
            submodule,
            keyword: keyword.into(),
            reply,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockBackend {
    rules: Vec<MockRule>,
}

const ENVIRONMENT_KEYWORDS: &[&str] = &[
    "No space left on device",
    "Disk quota exceeded",
    "Connection refused",
    "Connection reset by peer",
    "Network is unreachable",
    "Temporary failure in name resolution",
    "Max retries exceeded",
];

const BUG_KEYWORDS: &[&str] = &["PI_ERROR_DEVICE_NOT_FOUND", "dnnl::error"];

impl MockBackend {
    pub fn new(rules: Vec<MockRule>) -> Self {
        Self { rules }
    }

    /// Rule table mirroring the diagnosis exemplars: device and library
    /// errors are bugs, disk and network failures are environment issues.
    pub fn reference() -> Self {
        let mut rules = Vec::new();
        for kw in BUG_KEYWORDS {
            rules.push(MockRule::new(Submodule::BugDiagnosis, *kw, MockReply::Bug));
        }
        for kw in ENVIRONMENT_KEYWORDS {
            rules.push(MockRule::new(
                Submodule::BugDiagnosis,
                *kw,
                MockReply::NotBug,
            ));
        }
        Self { rules }
    }

    pub fn with_rule(mut self, rule: MockRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn rules(&self) -> &[MockRule] {
        &self.rules
    }

    fn find_rule(
        &self,
        submodule: Submodule,
        matches: impl Fn(&str) -> bool,
    ) -> Option<&MockReply> {
        self.rules
            .iter()
            .find(|r| r.submodule == submodule && matches(&r.keyword))
            .map(|r| &r.reply)
    }

    /// The completion text for a conversation.
    pub fn respond(&self, messages: &[ChatMessage], submodule: Submodule) -> String {
        let last_user = messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        match submodule {
            Submodule::RootErrorAnalysis => {
                match self.find_rule(submodule, |kw| last_user.contains(kw)) {
                    Some(reply) => self.render_reply(reply, messages),
                    None => format!("{}", deepest_index(last_user)),
                }
            }
            Submodule::BugDiagnosis => {
                let reply = self
                    .find_rule(submodule, |kw| last_user.contains(kw))
                    .unwrap_or(&MockReply::Bug);
                let subject = quoted_error(last_user).unwrap_or(last_user);
                diagnosis_text(reply, subject).unwrap_or_else(|| self.render_reply(reply, messages))
            }
            Submodule::BugSummarization => {
                let user_text: Vec<&str> = messages
                    .iter()
                    .filter(|m| m.role == Role::User)
                    .map(|m| m.content.as_str())
                    .collect();
                match self.find_rule(submodule, |kw| user_text.iter().any(|t| t.contains(kw))) {
                    Some(reply) => self.render_reply(reply, messages),
                    None => default_summary(&user_text),
                }
            }
            Submodule::DuplicateDetection => {
                let (first, second) = match last_user.split_once(SECOND_REPORT_MARKER) {
                    Some(halves) => halves,
                    None => (last_user, ""),
                };
                let fires = |kw: &str| {
                    if second.is_empty() {
                        first.matches(kw).count() >= 2
                    } else {
                        first.contains(kw) && second.contains(kw)
                    }
                };
                let reply = self
                    .find_rule(submodule, fires)
                    .unwrap_or(&MockReply::Distinct);
                self.render_reply(reply, messages)
            }
        }
    }

    fn render_reply(&self, reply: &MockReply, messages: &[ChatMessage]) -> String {
        match reply {
            MockReply::Text { text } => text.clone(),
            MockReply::Index { index } => format!("{index}"),
            MockReply::Bug | MockReply::NotBug => {
                let last = messages.last().map(|m| m.content.as_str()).unwrap_or("");
                diagnosis_text(reply, last).unwrap_or_default()
            }
            MockReply::Duplicate => "Both reports describe the same failure. YES".to_owned(),
            MockReply::Distinct => "The reports describe different failures. NO".to_owned(),
            MockReply::Summary {
                summary,
                description,
            } => fenced_summary(summary, description),
        }
    }
}

impl ChatBackend for MockBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        profile: &ModelProfile,
    ) -> Result<CompletionResult, BackendError> {
        check_conversation(messages)?;
        Ok(CompletionResult {
            text: self.respond(messages, profile.submodule),
            model_name: profile.model_name.clone(),
            latency_us: 0,
            truncated: false,
        })
    }
}

fn diagnosis_text(reply: &MockReply, subject: &str) -> Option<String> {
    let subject = subject.trim();
    match reply {
        MockReply::Bug => Some(format!(
            "{subject} is not network connection error or disk out of space error, so according to the criteria, it is a bug rather than test environment issue. Final answer: True"
        )),
        MockReply::NotBug => Some(format!(
            "{subject} is a network or disk space error, so according to the criteria, it is a test environment issue rather than a bug. Final answer: False"
        )),
        _ => None,
    }
}

// Text between the first pair of double quotes, or after the marker when
// the closing quote is missing.
fn quoted_error(text: &str) -> Option<&str> {
    let start = text.find('"')? + 1;
    let rest = &text[start..];
    Some(match rest.rfind('"') {
        Some(end) => &rest[..end],
        None => rest,
    })
}

fn deepest_index(list: &str) -> usize {
    list.lines()
        .filter_map(|line| {
            let rest = line.trim_start().strip_prefix('[')?;
            let (num, _) = rest.split_once(']')?;
            num.parse::<usize>().ok()
        })
        .max()
        .unwrap_or(1)
}

const ERROR_LINE_MARKER: &str = "The line of error in the log is: \"";
const ERROR_CONTENT_MARKER: &str = "based on the log: \"";

fn after_marker<'a>(texts: &[&'a str], marker: &str, terminator: &str) -> Option<&'a str> {
    texts.iter().find_map(|t| {
        let start = t.find(marker)? + marker.len();
        let rest = &t[start..];
        Some(match rest.rfind(terminator) {
            Some(end) => &rest[..end],
            None => rest,
        })
    })
}

fn default_summary(user_text: &[&str]) -> String {
    let line = after_marker(user_text, ERROR_LINE_MARKER, "\", please")
        .or_else(|| user_text.first().copied())
        .unwrap_or("")
        .trim();
    let content = after_marker(user_text, ERROR_CONTENT_MARKER, "\".")
        .map(str::trim)
        .unwrap_or(line);
    let from_key = match text::key_error_token(line) {
        Some(tok) => line.find(tok).map(|i| &line[i..]).unwrap_or(line),
        None => line,
    };
    let mut summary: Vec<&str> = from_key.split_whitespace().take(10).collect();
    if summary.is_empty() {
        summary.push("Test failure");
    }
    let description = if content.is_empty() { line } else { content };
    let description = if description.is_empty() {
        "no error text"
    } else {
        description
    };
    fenced_summary(&summary.join(" "), description)
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    summary: &'a str,
    description: &'a str,
}

fn fenced_summary(summary: &str, description: &str) -> String {
    let json = serde_json::to_string(&SummaryJson {
        summary,
        description,
    })
    .unwrap_or_default();
    format!("```json\n{json}\n```")
}
