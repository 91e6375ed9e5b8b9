//! Triage request schema and validation.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::ingestion::{TestFailure, TestInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RequestOptions {
    /// Produce full outcomes but perform no tracker or mail calls.
    pub dry_run: bool,
    /// Compare new bugs against the open-report registry.
    pub dedup_against_registry: bool,
}

impl Default for RequestOptions {
    fn default() -> Self {
        Self {
            dry_run: false,
            dedup_against_registry: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
    pub failures: Vec<TestFailure>,
    #[serde(default)]
    pub options: RequestOptions,
}

impl TriageRequest {
    pub fn new(failures: Vec<TestFailure>) -> Self {
        Self {
            request_id: None,
            failures,
            options: RequestOptions::default(),
        }
    }
}

/// One schema violation, located by a JSON-pointer-like path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldProblem {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RequestError {
    #[error("request body is not valid JSON: {0}")]
    Syntax(String),
    #[error("request failed validation: {}", join_problems(.0))]
    Invalid(Vec<FieldProblem>),
}

impl RequestError {
    pub fn problems(&self) -> &[FieldProblem] {
        match self {
            RequestError::Invalid(p) => p,
            RequestError::Syntax(_) => &[],
        }
    }
}

fn join_problems(problems: &[FieldProblem]) -> String {
    problems
        .iter()
        .map(|p| p.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Parses and validates a request document.
pub fn assemble_request(body: &str) -> Result<TriageRequest, RequestError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| RequestError::Syntax(e.to_string()))?;
    assemble_request_value(&value)
}

pub fn assemble_request_value(value: &Value) -> Result<TriageRequest, RequestError> {
    let mut problems = Vec::new();
    let Some(root) = value.as_object() else {
        return Err(RequestError::Invalid(alloc::vec![problem(
            "",
            "expected an object"
        )]));
    };

    let request_id = match root.get("request_id") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
        Some(_) => {
            problems.push(problem("/request_id", "must be a non-empty string"));
            None
        }
    };

    let options = match root.get("options") {
        None | Some(Value::Null) => RequestOptions::default(),
        Some(v) => match RequestOptions::deserialize(v) {
            Ok(o) => o,
            Err(e) => {
                problems.push(problem("/options", &e.to_string()));
                RequestOptions::default()
            }
        },
    };

    let mut failures = Vec::new();
    match root.get("failures") {
        Some(Value::Array(items)) => {
            let mut seen = BTreeSet::new();
            for (i, item) in items.iter().enumerate() {
                if let Some(f) = parse_failure(i, item, &mut problems) {
                    if !seen.insert(f.failure_id.clone()) {
                        problems.push(problem(
                            &format!("/failures/{i}/failure_id"),
                            &format!("duplicate failure_id \"{}\"", f.failure_id),
                        ));
                    }
                    failures.push(f);
                }
            }
        }
        Some(_) => problems.push(problem("/failures", "must be an array")),
        None => problems.push(problem("/failures", "missing required field")),
    }

    if problems.is_empty() {
        Ok(TriageRequest {
            request_id,
            failures,
            options,
        })
    } else {
        Err(RequestError::Invalid(problems))
    }
}

fn parse_failure(i: usize, item: &Value, problems: &mut Vec<FieldProblem>) -> Option<TestFailure> {
    let base = format!("/failures/{i}");
    let Some(obj) = item.as_object() else {
        problems.push(problem(&base, "expected an object"));
        return None;
    };
    let before = problems.len();

    let failure_id = required_string(obj, &base, "failure_id", problems);
    if matches!(failure_id.as_deref(), Some("")) {
        problems.push(problem(&format!("{base}/failure_id"), "must be non-empty"));
    }
    let raw_log = required_string(obj, &base, "raw_log", problems);
    let test_name = optional_string(obj, &base, "test_name", problems).unwrap_or_default();
    let suite = optional_string(obj, &base, "suite", problems);
    let test_info = match obj.get("test_info") {
        None | Some(Value::Null) => TestInfo::new(),
        Some(v) => match TestInfo::deserialize(v) {
            Ok(info) => info,
            Err(_) => {
                problems.push(problem(
                    &format!("{base}/test_info"),
                    "must be an object of string values",
                ));
                TestInfo::new()
            }
        },
    };

    if problems.len() != before {
        return None;
    }
    Some(TestFailure {
        failure_id: failure_id?,
        test_name,
        suite,
        test_info,
        raw_log: raw_log?,
        invalid_utf8_replaced: false,
    })
}

fn required_string(
    obj: &Map<String, Value>,
    base: &str,
    field: &str,
    problems: &mut Vec<FieldProblem>,
) -> Option<String> {
    match obj.get(field) {
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            problems.push(problem(&format!("{base}/{field}"), "must be a string"));
            None
        }
        None => {
            problems.push(problem(
                &format!("{base}/{field}"),
                "missing required field",
            ));
            None
        }
    }
}

fn optional_string(
    obj: &Map<String, Value>,
    base: &str,
    field: &str,
    problems: &mut Vec<FieldProblem>,
) -> Option<String> {
    match obj.get(field) {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            problems.push(problem(&format!("{base}/{field}"), "must be a string"));
            None
        }
    }
}

fn problem(path: &str, message: &str) -> FieldProblem {
    FieldProblem {
        path: path.into(),
        message: message.into(),
    }
}
