//! Log ingestion: error-pattern registry and per-failure error digests.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use regex_automata::meta::Regex;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Logs above this size are cut down to their last `MAX_LOG_BYTES`.
pub const MAX_LOG_BYTES: usize = 10 * 1024 * 1024;
pub const DEFAULT_CONTEXT_BEFORE: usize = 2;
pub const DEFAULT_CONTEXT_AFTER: usize = 5;

/// Ordered string map for test metadata; keeps submission order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TestInfo(Vec<(String, String)>);

impl TestInfo {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces, keeping the original position of an existing key.
    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.0.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.0.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Serialize for TestInfo {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for TestInfo {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct InfoVisitor;

        impl<'de> Visitor<'de> for InfoVisitor {
            type Value = TestInfo;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of string values")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<TestInfo, A::Error> {
                let mut info = TestInfo::new();
                while let Some((k, v)) = access.next_entry::<String, String>()? {
                    info.insert(k, v);
                }
                Ok(info)
            }
        }

        deserializer.deserialize_map(InfoVisitor)
    }
}

/// One failed test case: metadata plus the raw log text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestFailure {
    pub failure_id: String,
    #[serde(default)]
    pub test_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    #[serde(default)]
    pub test_info: TestInfo,
    pub raw_log: String,
    /// Set when the log was decoded lossily from bytes.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub invalid_utf8_replaced: bool,
}

impl TestFailure {
    pub fn new(failure_id: impl Into<String>, raw_log: impl Into<String>) -> Self {
        Self {
            failure_id: failure_id.into(),
            test_name: String::new(),
            suite: None,
            test_info: TestInfo::new(),
            raw_log: raw_log.into(),
            invalid_utf8_replaced: false,
        }
    }

    /// Decodes a log from raw bytes, replacing invalid UTF-8 sequences.
    pub fn from_log_bytes(failure_id: impl Into<String>, bytes: &[u8]) -> Self {
        let decoded = String::from_utf8_lossy(bytes);
        let replaced = matches!(decoded, alloc::borrow::Cow::Owned(_));
        let mut failure = Self::new(failure_id, decoded.into_owned());
        failure.invalid_utf8_replaced = replaced;
        failure
    }

    pub fn with_test_name(mut self, name: impl Into<String>) -> Self {
        self.test_name = name.into();
        self
    }
}

/// An error pattern as written in a registry document, before compilation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub id: String,
    pub expr: String,
    #[serde(default)]
    pub priority: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<usize>,
}

impl PatternSpec {
    pub fn new(id: impl Into<String>, expr: impl Into<String>, priority: i64) -> Self {
        Self {
            id: id.into(),
            expr: expr.into(),
            priority,
            before: None,
            after: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatternError {
    #[error("pattern registry is malformed at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("pattern `{pattern_id}` has an invalid expression: {message}")]
    InvalidExpression { pattern_id: String, message: String },
    #[error("pattern id `{pattern_id}` is defined more than once")]
    DuplicateId { pattern_id: String },
    #[error("pattern at position {position} has an empty id")]
    EmptyId { position: usize },
}

/// A compiled error pattern.
#[derive(Debug, Clone)]
pub struct ErrorPattern {
    pub pattern_id: String,
    pub expression: String,
    /// Lower values are matched first.
    pub priority: i64,
    pub context_before: usize,
    pub context_after: usize,
    regex: Regex,
}

impl ErrorPattern {
    pub fn compile(spec: &PatternSpec) -> Result<Self, PatternError> {
        let regex = Regex::new(&spec.expr).map_err(|e| PatternError::InvalidExpression {
            pattern_id: spec.id.clone(),
            message: e.to_string(),
        })?;
        Ok(Self {
            pattern_id: spec.id.clone(),
            expression: spec.expr.clone(),
            priority: spec.priority,
            context_before: spec.before.unwrap_or(DEFAULT_CONTEXT_BEFORE),
            context_after: spec.after.unwrap_or(DEFAULT_CONTEXT_AFTER),
            regex,
        })
    }

    pub fn is_match(&self, line: &str) -> bool {
        self.regex.is_match(line)
    }
}

/// Validated, priority-ordered set of error patterns. Immutable once built
/// and safe to share between threads.
#[derive(Debug, Clone, Default)]
pub struct PatternRegistry {
    patterns: Vec<ErrorPattern>,
    // Union of all expressions; lets most lines be rejected with one scan.
    any: Option<Regex>,
}

impl PatternRegistry {
    pub fn new(specs: &[PatternSpec]) -> Result<Self, PatternError> {
        let mut seen = BTreeSet::new();
        let mut patterns = Vec::with_capacity(specs.len());
        for (position, spec) in specs.iter().enumerate() {
            if spec.id.is_empty() {
                return Err(PatternError::EmptyId { position });
            }
            if !seen.insert(spec.id.as_str()) {
                return Err(PatternError::DuplicateId {
                    pattern_id: spec.id.clone(),
                });
            }
            patterns.push(ErrorPattern::compile(spec)?);
        }
        patterns.sort_by(|a, b| {
            a.priority
                .cmp(&b.priority)
                .then_with(|| a.pattern_id.cmp(&b.pattern_id))
        });
        let any = if patterns.is_empty() {
            None
        } else {
            let exprs: Vec<&str> = patterns.iter().map(|p| p.expression.as_str()).collect();
            Regex::new_many(&exprs).ok()
        };
        Ok(Self { patterns, any })
    }

    pub fn patterns(&self) -> &[ErrorPattern] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// The highest-priority pattern matching `line`.
    pub fn first_match(&self, line: &str) -> Option<&ErrorPattern> {
        if let Some(any) = &self.any {
            if !any.is_match(line) {
                return None;
            }
        }
        self.patterns.iter().find(|p| p.is_match(line))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    /// 1-based position in the digest.
    pub index: usize,
    pub matched_line: String,
    pub context: String,
    pub pattern_id: String,
    /// 1-based line number in the source log.
    pub line_number: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDigest {
    pub failure_id: String,
    pub records: Vec<ErrorRecord>,
    /// Ingestion warnings (lossy decoding, truncation).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<String>,
}

impl ErrorDigest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&ErrorRecord> {
        index.checked_sub(1).and_then(|i| self.records.get(i))
    }

    /// The numbered list shown to the root-analysis model, one `[n] line`
    /// entry per record.
    pub fn numbered_list(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!(
                "[{}] {}",
                record.index,
                record.matched_line.trim()
            ));
        }
        out
    }
}

/// Scans a failure's log against the registry, one record per matching line.
pub fn extract_errors(failure: &TestFailure, registry: &PatternRegistry) -> ErrorDigest {
    extract_errors_capped(failure, registry, MAX_LOG_BYTES)
}

/// [`extract_errors`] with an explicit log size cap.
pub fn extract_errors_capped(
    failure: &TestFailure,
    registry: &PatternRegistry,
    max_bytes: usize,
) -> ErrorDigest {
    let mut provenance = Vec::new();
    if failure.invalid_utf8_replaced {
        provenance.push("invalid UTF-8 sequences in log were replaced".to_owned());
    }

    let (log, skipped_lines) = tail_window(&failure.raw_log, max_bytes);
    if skipped_lines > 0 || log.len() < failure.raw_log.len() {
        provenance.insert(
            0,
            format!(
                "log truncated: kept last {} of {} bytes, {} leading lines dropped",
                log.len(),
                failure.raw_log.len(),
                skipped_lines
            ),
        );
    }

    let lines: Vec<&str> = log.lines().collect();
    let mut records = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let Some(pattern) = registry.first_match(line) else {
            continue;
        };
        let start = i.saturating_sub(pattern.context_before);
        let end = (i + pattern.context_after + 1).min(lines.len());
        records.push(ErrorRecord {
            index: records.len() + 1,
            matched_line: (*line).to_owned(),
            context: lines[start..end].join("\n"),
            pattern_id: pattern.pattern_id.clone(),
            line_number: skipped_lines + i + 1,
        });
    }

    ErrorDigest {
        failure_id: failure.failure_id.clone(),
        records,
        provenance,
    }
}

// Keeps the last `max_bytes` of the log, starting at a line boundary.
// Returns the kept slice and how many source lines precede it.
fn tail_window(log: &str, max_bytes: usize) -> (&str, usize) {
    if log.len() <= max_bytes {
        return (log, 0);
    }
    let mut cut = log.len() - max_bytes;
    while !log.is_char_boundary(cut) {
        cut += 1;
    }
    if cut > 0 && log.as_bytes()[cut - 1] != b'\n' {
        cut = match log[cut..].find('\n') {
            Some(pos) => cut + pos + 1,
            None => log.len(),
        };
    }
    let skipped = log.as_bytes()[..cut]
        .iter()
        .filter(|&&b| b == b'\n')
        .count();
    (&log[cut..], skipped)
}
