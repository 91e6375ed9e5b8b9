//! The pattern registry file: a TOML document with one `[[pattern]]` table
//! per entry.

use bugblitz_core::{PatternError, PatternRegistry, PatternSpec};
use serde::Deserialize;

/// The pattern set shipped with the tool.
pub const DEFAULT_PATTERNS: &str = include_str!("../assets/default_patterns.toml");

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternFile {
    #[serde(default)]
    pattern: Vec<PatternSpec>,
}

pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub fn parse_pattern_specs(text: &str) -> Result<Vec<PatternSpec>, PatternError> {
    let file: PatternFile = toml::from_str(text).map_err(|e| PatternError::Malformed {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
        message: e.message().to_string(),
    })?;
    Ok(file.pattern)
}

/// Parses and compiles a registry document.
pub fn load_pattern_registry(text: &str) -> Result<PatternRegistry, PatternError> {
    PatternRegistry::new(&parse_pattern_specs(text)?)
}

pub fn default_registry() -> PatternRegistry {
    load_pattern_registry(DEFAULT_PATTERNS).expect("bundled patterns are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry() {
        let r = load_pattern_registry(
            "[[pattern]]\nid = \"trace\"\nexpr = \"Traceback\"\npriority = 10\n",
        )
        .unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.patterns()[0].context_before, 2);
        assert_eq!(r.patterns()[0].context_after, 5);
    }

    #[test]
    fn empty_document() {
        assert!(load_pattern_registry("").unwrap().is_empty());
    }

    #[test]
    fn duplicate_id() {
        let doc =
            "[[pattern]]\nid = \"oom\"\nexpr = \"a\"\n\n[[pattern]]\nid = \"oom\"\nexpr = \"b\"\n";
        assert_eq!(
            load_pattern_registry(doc).unwrap_err(),
            PatternError::DuplicateId {
                pattern_id: "oom".into()
            }
        );
    }

    #[test]
    fn malformed_names_line() {
        let doc = "[[pattern]]\nid = \"a\"\nexpr = \"x\"\npriority = \"high\"\n";
        match load_pattern_registry(doc).unwrap_err() {
            PatternError::Malformed { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        match load_pattern_registry("[[pattern]\n").unwrap_err() {
            PatternError::Malformed { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_expression_names_pattern() {
        let doc = "[[pattern]]\nid = \"broken\"\nexpr = \"(unclosed\"\n";
        assert!(matches!(
            load_pattern_registry(doc).unwrap_err(),
            PatternError::InvalidExpression { pattern_id, .. } if pattern_id == "broken"
        ));
    }

    #[test]
    fn defaults_catch_common_framework_errors() {
        let r = default_registry();
        for line in [
            "TypeError: Input 'y' of 'Add' Op has type bfloat16 that does not match type float32 of argument 'x'",
            "OSError: [Errno 28] No space left on device",
            "terminate called after throwing an instance of 'sycl::_V1::runtime_error'",
            "  what():  Native API failed. Native API returns: -1 (PI_ERROR_DEVICE_NOT_FOUND) -1 (PI_ERROR_DEVICE_NOT_FOUND)",
            "RuntimeError: could not create a primitive descriptor for a matmul primitive (dnnl::error)",
            "requests.exceptions.ConnectionError: HTTPSConnectionPool(host='x', port=443): Max retries exceeded",
        ] {
            assert!(r.first_match(line).is_some(), "{line}");
        }
        for line in ["collected 12 items", "test_add PASSED", "Running 3 tests"] {
            assert!(r.first_match(line).is_none(), "{line}");
        }
    }
}
