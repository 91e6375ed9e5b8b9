//! Small text utilities shared by dedup, evaluation and export.

use alloc::string::String;
use alloc::vec::Vec;

/// Lowercases and collapses every whitespace run into a single space.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        for c in word.chars() {
            out.extend(c.to_lowercase());
        }
    }
    out
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

const TRIM: &[char] = &[
    '"', '\'', '`', ',', '.', ';', ':', '(', ')', '[', ']', '{', '}', '<', '>', '!', '?',
];

/// Whitespace tokens with surrounding punctuation removed; empty tokens skipped.
pub fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
        .map(|t| t.trim_matches(TRIM))
        .filter(|t| !t.is_empty())
}

/// The first token that names an error: contains "error", "exception" or
/// "fault" (any case). `TypeError`, `dnnl::error` and
/// `PI_ERROR_DEVICE_NOT_FOUND` all qualify.
pub fn key_error_token(text: &str) -> Option<&str> {
    tokens(text).find(|t| {
        let lower = t.to_ascii_lowercase();
        lower.contains("error") || lower.contains("exception") || lower.contains("fault")
    })
}

/// Identifier-like tokens: project keys, paths, CamelCase and SHOUTING_CASE
/// names, anything with a digit. Plain words ("Test", "failed") are not
/// salient.
pub fn is_salient(token: &str) -> bool {
    if token.chars().count() < 2 {
        return false;
    }
    let has_marker = token
        .chars()
        .any(|c| c.is_ascii_digit() || matches!(c, '_' | '-' | '/' | '.' | ':'));
    let inner_upper = token.chars().skip(1).any(|c| c.is_uppercase());
    has_marker || inner_upper
}

pub fn salient_tokens(text: &str) -> Vec<&str> {
    tokens(text).filter(|t| is_salient(t)).collect()
}

/// Drops control characters other than newline and tab. Returns the cleaned
/// text and whether anything was removed.
pub fn strip_non_printable(text: &str) -> (String, bool) {
    let mut changed = false;
    let cleaned = text
        .chars()
        .filter(|&c| {
            let keep = !c.is_control() || c == '\n' || c == '\t';
            changed |= !keep;
            keep
        })
        .collect();
    (cleaned, changed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_and_lowercases() {
        assert_eq!(
            normalize("  TypeError:\n  Input\t'y' "),
            "typeerror: input 'y'"
        );
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn key_token_variants() {
        assert_eq!(
            key_error_token("Test case failed with TypeError"),
            Some("TypeError")
        );
        assert_eq!(
            key_error_token("terminate called after throwing an instance of 'dnnl::error'"),
            Some("dnnl::error")
        );
        assert_eq!(
            key_error_token("returns: -1 (PI_ERROR_DEVICE_NOT_FOUND)"),
            Some("PI_ERROR_DEVICE_NOT_FOUND")
        );
        assert_eq!(key_error_token("all good here"), None);
    }

    #[test]
    fn salience() {
        assert!(is_salient("PROJ-1"));
        assert!(is_salient("TypeError"));
        assert!(is_salient("/xxx/lib"));
        assert!(!is_salient("Test"));
        assert!(!is_salient("failed"));
        assert!(!is_salient("a"));
    }

    #[test]
    fn strips_control_chars() {
        let (s, changed) = strip_non_printable("ok\u{1b}[31m\tred\n");
        assert_eq!(s, "ok[31m\tred\n");
        assert!(changed);
        assert!(!strip_non_printable("plain").1);
    }
}
