use alloc::string::{String, ToString};

use super::{DiagnosisVerdict, RootCauseFinding, StageError};
use crate::backend::{ChatBackend, ModelProfile};
use crate::template::PromptTemplate;

const FINAL_ANSWER: &str = "final answer";

/// The verdict carried by the last `Final answer: True|False` token, if any.
/// Case-insensitive; quotes, asterisks and whitespace may sit between the
/// colon and the value.
pub fn parse_final_answer(text: &str) -> Option<bool> {
    let lower = text.to_ascii_lowercase();
    let mut verdict = None;
    let mut from = 0;
    while let Some(pos) = lower[from..].find(FINAL_ANSWER) {
        let start = from + pos + FINAL_ANSWER.len();
        from = start;
        let rest = lower[start..].trim_start_matches(|c: char| {
            c.is_whitespace() || matches!(c, ':' | '*' | '\'' | '"' | '`')
        });
        let value = if rest.starts_with("true") {
            Some((true, 4))
        } else if rest.starts_with("false") {
            Some((false, 5))
        } else {
            None
        };
        if let Some((v, len)) = value {
            let terminated = rest[len..]
                .chars()
                .next()
                .is_none_or(|c| !c.is_alphanumeric() && c != '_');
            if terminated {
                verdict = Some(v);
            }
        }
    }
    verdict
}

/// Classifies the root-cause error as product bug or environment issue.
/// Answers without a final-answer token count as bugs.
pub fn diagnose<B: ChatBackend + ?Sized>(
    finding: &RootCauseFinding,
    backend: &B,
    profile: &ModelProfile,
    template: &PromptTemplate,
) -> Result<DiagnosisVerdict, StageError> {
    let line = finding.chosen_record.matched_line.trim();
    let messages = template.render(&[("error_line", line)])?;
    let completion = backend.complete(&messages, profile)?;
    Ok(verdict_from_answer(&finding.failure_id, completion.text))
}

pub(crate) fn verdict_from_answer(failure_id: &str, answer: String) -> DiagnosisVerdict {
    let (is_bug, reasoning) = match parse_final_answer(&answer) {
        Some(v) => (v, reasoning_of(&answer)),
        None => (true, "fallback".to_string()),
    };
    DiagnosisVerdict {
        failure_id: failure_id.into(),
        is_bug,
        reasoning,
        raw_answer: answer,
    }
}

fn reasoning_of(answer: &str) -> String {
    let lower = answer.to_ascii_lowercase();
    let cut = lower.rfind(FINAL_ANSWER).unwrap_or(answer.len());
    let text = answer[..cut].trim();
    text.strip_prefix("Answer:")
        .unwrap_or(text)
        .trim()
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Profiles;
    use crate::ingestion::ErrorRecord;
    use crate::mock::MockBackend;
    use crate::prompts;

    fn finding(line: &str) -> RootCauseFinding {
        RootCauseFinding {
            failure_id: "f".into(),
            chosen_index: 1,
            chosen_record: ErrorRecord {
                index: 1,
                matched_line: line.into(),
                context: line.into(),
                pattern_id: "p".into(),
                line_number: 1,
            },
            raw_answer: String::new(),
            fallback_used: false,
        }
    }

    fn verdict(mock: &MockBackend, line: &str) -> DiagnosisVerdict {
        let p = Profiles::defaults("mock://");
        diagnose(
            &finding(line),
            mock,
            &p.bug_diagnosis,
            &prompts::diagnosis_template(),
        )
        .unwrap()
    }

    #[test]
    fn parses_last_token() {
        assert_eq!(parse_final_answer("Final answer: True"), Some(true));
        assert_eq!(parse_final_answer("... Final answer: False."), Some(false));
        assert_eq!(parse_final_answer("final ANSWER: 'false'"), Some(false));
        assert_eq!(
            parse_final_answer("Final answer: True. On reflection, Final answer: False"),
            Some(false)
        );
        assert_eq!(parse_final_answer("**Final answer:** True"), Some(true));
        assert_eq!(parse_final_answer("Final answer: Truely"), None);
        assert_eq!(parse_final_answer("it is a bug"), None);
    }

    #[test]
    fn device_not_found_is_bug() {
        let v = verdict(
            &MockBackend::reference(),
            "what(): Native API failed. Native API returns: -1 (PI_ERROR_DEVICE_NOT_FOUND) -1 (PI_ERROR_DEVICE_NOT_FOUND)",
        );
        assert!(v.is_bug);
        assert_ne!(v.reasoning, "fallback");
    }

    #[test]
    fn no_space_is_environment() {
        let v = verdict(
            &MockBackend::reference(),
            "OSError: [Errno 28] No space left on device",
        );
        assert!(!v.is_bug);
        assert!(v.reasoning.contains("test environment issue"));
    }

    #[test]
    fn prose_without_token_falls_back_to_bug() {
        let v = verdict_from_answer("f", "I am not sure what happened here.".into());
        assert!(v.is_bug);
        assert_eq!(v.reasoning, "fallback");
    }
}
