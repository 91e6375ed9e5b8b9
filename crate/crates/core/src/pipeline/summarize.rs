use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::Value;

use super::{BugSummary, RootCauseFinding, StageError};
use crate::backend::{ChatBackend, ChatMessage, ModelProfile, Role};
use crate::template::PromptTemplate;
use crate::text::word_count;

/// Summaries longer than this trigger one retry of the chain.
pub const SUMMARY_WORD_TARGET: usize = 10;

const FENCE_OPEN: &str = "```json";
const FENCE_CLOSE: &str = "```";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("no fenced json block")]
    NoBlock,
    #[error("fenced block is not valid JSON: {0}")]
    Json(String),
    #[error(
        "fenced block must be an object with exactly `summary` and `description` string fields"
    )]
    Shape,
    #[error("`{0}` is empty")]
    EmptyField(&'static str),
}

/// Parses the last complete ```` ```json ```` block of a completion into a
/// `(summary, description)` pair.
pub fn extract_summary_block(text: &str) -> Result<(String, String), ExtractError> {
    let mut last = None;
    let mut from = 0;
    while let Some(pos) = text[from..].find(FENCE_OPEN) {
        let body_start = from + pos + FENCE_OPEN.len();
        match text[body_start..].find(FENCE_CLOSE) {
            Some(len) => {
                last = Some(&text[body_start..body_start + len]);
                from = body_start + len + FENCE_CLOSE.len();
            }
            None => break,
        }
    }
    let body = last.ok_or(ExtractError::NoBlock)?;
    let value: Value =
        serde_json::from_str(body.trim()).map_err(|e| ExtractError::Json(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(ExtractError::Shape);
    };
    if map.len() != 2 {
        return Err(ExtractError::Shape);
    }
    let (Some(Value::String(summary)), Some(Value::String(description))) =
        (map.get("summary"), map.get("description"))
    else {
        return Err(ExtractError::Shape);
    };
    if summary.trim().is_empty() {
        return Err(ExtractError::EmptyField("summary"));
    }
    if description.trim().is_empty() {
        return Err(ExtractError::EmptyField("description"));
    }
    Ok((summary.trim().to_string(), description.trim().to_string()))
}

/// Runs the chain once and returns the final completion text. Every user
/// turn not already answered in the template costs one model call.
fn run_chain<B: ChatBackend + ?Sized>(
    turns: &[ChatMessage],
    backend: &B,
    profile: &ModelProfile,
) -> Result<String, StageError> {
    let mut conversation: Vec<ChatMessage> = Vec::with_capacity(turns.len() * 2);
    let mut last_reply = String::new();
    for (i, turn) in turns.iter().enumerate() {
        conversation.push(turn.clone());
        let answered_in_template = turns.get(i + 1).is_some_and(|t| t.role == Role::Assistant);
        if turn.role == Role::User && !answered_in_template {
            let completion = backend.complete(&conversation, profile)?;
            last_reply = completion.text;
            // backends reject empty turns; keep the chain well-formed
            let content = if last_reply.is_empty() {
                String::from("(empty)")
            } else {
                last_reply.clone()
            };
            conversation.push(ChatMessage::assistant(content));
        }
    }
    Ok(last_reply)
}

/// Produces a tracker-ready summary through the prompt chain.
///
/// A chain whose final reply has no valid block is rerun once; so is one
/// whose summary exceeds [`SUMMARY_WORD_TARGET`] words. An over-long summary
/// is accepted when the rerun does not improve on it.
pub fn summarize<B: ChatBackend + ?Sized>(
    finding: &RootCauseFinding,
    backend: &B,
    profile: &ModelProfile,
    template: &PromptTemplate,
) -> Result<BugSummary, StageError> {
    let record = &finding.chosen_record;
    let turns = template.render(&[
        ("error_content", record.context.as_str()),
        ("error_line", record.matched_line.trim()),
    ])?;

    let mut long_candidate: Option<(String, String)> = None;
    let mut failure = None;
    for _ in 0..2 {
        let raw = run_chain(&turns, backend, profile)?;
        match extract_summary_block(&raw) {
            Ok((summary, description)) if word_count(&summary) <= SUMMARY_WORD_TARGET => {
                return Ok(BugSummary::new(&finding.failure_id, &summary, &description));
            }
            Ok(pair) => {
                long_candidate.get_or_insert(pair);
            }
            Err(e) => failure = Some((e.to_string(), raw)),
        }
    }
    if let Some((summary, description)) = long_candidate {
        return Ok(BugSummary::new(&finding.failure_id, &summary, &description));
    }
    let (reason, raw_completion) = failure.unwrap_or_default();
    Err(StageError::Summarization {
        reason,
        raw_completion,
    })
}
