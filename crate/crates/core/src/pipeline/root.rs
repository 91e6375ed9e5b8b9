use alloc::string::String;

use super::{RootCauseFinding, StageError};
use crate::backend::{ChatBackend, ModelProfile};
use crate::ingestion::ErrorDigest;
use crate::template::PromptTemplate;

/// First run of ASCII digits not glued to a letter, digit or underscore.
pub fn parse_first_index(answer: &str) -> Option<usize> {
    let bytes = answer.as_bytes();
    let word = |b: u8| b.is_ascii_alphanumeric() || b == b'_';
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let glued_before = start > 0 && word(bytes[start - 1]);
            let glued_after = i < bytes.len() && word(bytes[i]);
            if !glued_before && !glued_after {
                return answer[start..i].parse().ok();
            }
        } else {
            i += 1;
        }
    }
    None
}

/// Picks the root-cause record of a digest.
///
/// A single-record digest is chosen without asking the model. An answer
/// without a usable index falls back to the last record.
pub fn analyze_root_error<B: ChatBackend + ?Sized>(
    digest: &ErrorDigest,
    backend: &B,
    profile: &ModelProfile,
    template: &PromptTemplate,
) -> Result<RootCauseFinding, StageError> {
    let last = digest.records.last().ok_or(StageError::EmptyDigest)?;
    if digest.len() == 1 {
        return Ok(RootCauseFinding {
            failure_id: digest.failure_id.clone(),
            chosen_index: 1,
            chosen_record: last.clone(),
            raw_answer: String::new(),
            fallback_used: false,
        });
    }

    let list = digest.numbered_list();
    let messages = template.render(&[("error_list", &list)])?;
    let completion = backend.complete(&messages, profile)?;

    let parsed = parse_first_index(&completion.text).and_then(|i| digest.get(i));
    let (record, fallback_used) = match parsed {
        Some(record) => (record, false),
        None => (last, true),
    };
    Ok(RootCauseFinding {
        failure_id: digest.failure_id.clone(),
        chosen_index: record.index,
        chosen_record: record.clone(),
        raw_answer: completion.text,
        fallback_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Profiles, Submodule};
    use crate::ingestion::{extract_errors, PatternRegistry, PatternSpec, TestFailure};
    use crate::mock::{MockBackend, MockReply, MockRule};
    use crate::prompts;
    use alloc::vec;

    fn digest(n: usize) -> ErrorDigest {
        let log: alloc::vec::Vec<alloc::string::String> = (1..=n)
            .map(|i| alloc::format!("ERROR number {i}"))
            .collect();
        let reg = PatternRegistry::new(&[PatternSpec::new("e", "ERROR", 1)]).unwrap();
        extract_errors(&TestFailure::new("f", log.join("\n")), &reg)
    }

    fn run(mock: &MockBackend, n: usize) -> RootCauseFinding {
        let p = Profiles::defaults("mock://");
        analyze_root_error(
            &digest(n),
            mock,
            &p.root_error_analysis,
            &prompts::root_error_template(),
        )
        .unwrap()
    }

    #[test]
    fn parse_index_forms() {
        assert_eq!(parse_first_index("2"), Some(2));
        assert_eq!(parse_first_index("The root cause is [3]."), Some(3));
        assert_eq!(parse_first_index("error2 then 5"), Some(5));
        assert_eq!(parse_first_index("index seven-ish"), None);
        assert_eq!(parse_first_index(""), None);
    }

    #[test]
    fn single_record_forced() {
        let mock = MockBackend::new(vec![MockRule::new(
            Submodule::RootErrorAnalysis,
            "ERROR",
            MockReply::Text { text: "9".into() },
        )]);
        let f = run(&mock, 1);
        assert_eq!(f.chosen_index, 1);
        assert!(!f.fallback_used);
    }

    #[test]
    fn model_choice_used() {
        let mock = MockBackend::new(vec![MockRule::new(
            Submodule::RootErrorAnalysis,
            "ERROR",
            MockReply::Index { index: 2 },
        )]);
        let f = run(&mock, 3);
        assert_eq!(f.chosen_index, 2);
        assert_eq!(f.chosen_record.line_number, 2);
        assert!(!f.fallback_used);
    }

    #[test]
    fn unparseable_falls_back_to_last() {
        let mock = MockBackend::new(vec![MockRule::new(
            Submodule::RootErrorAnalysis,
            "ERROR",
            MockReply::Text {
                text: "index seven-ish".into(),
            },
        )]);
        let f = run(&mock, 3);
        assert!(f.fallback_used);
        assert_eq!(f.chosen_index, 3);
    }

    #[test]
    fn out_of_range_falls_back() {
        let mock = MockBackend::new(vec![MockRule::new(
            Submodule::RootErrorAnalysis,
            "ERROR",
            MockReply::Index { index: 7 },
        )]);
        let f = run(&mock, 3);
        assert!(f.fallback_used);
        assert_eq!(f.chosen_index, 3);
    }

    #[test]
    fn empty_digest_rejected() {
        let p = Profiles::defaults("mock://");
        let err = analyze_root_error(
            &ErrorDigest::default(),
            &MockBackend::default(),
            &p.root_error_analysis,
            &prompts::root_error_template(),
        )
        .unwrap_err();
        assert_eq!(err, StageError::EmptyDigest);
    }
}
