//! The analysis chain: root error analysis, bug diagnosis, bug
//! summarization and duplicate detection, plus the request-level driver.
//!
//! Each stage sees exactly one task. Diagnosis receives only the root-cause
//! record chosen by the first stage, never the whole digest.

mod dedup;
mod diagnosis;
mod root;
mod run;
mod summarize;

pub use dedup::{detect_duplicates, parse_yes_no, DedupOutcome};
pub use diagnosis::{diagnose, parse_final_answer};
pub use root::{analyze_root_error, parse_first_index};
pub use run::{
    analyze_failure, finish_request, run_pipeline, Clock, FailureAnalysis, NoClock, Pipeline,
    PipelineReport,
};
pub use summarize::{extract_summary_block, summarize, ExtractError, SUMMARY_WORD_TARGET};

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::action::TicketRef;
use crate::backend::BackendError;
use crate::ingestion::{ErrorDigest, ErrorRecord};
use crate::template::TemplateError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootCauseFinding {
    pub failure_id: String,
    pub chosen_index: usize,
    pub chosen_record: ErrorRecord,
    pub raw_answer: String,
    /// The answer could not be parsed and the last record was chosen.
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisVerdict {
    pub failure_id: String,
    pub is_bug: bool,
    pub reasoning: String,
    pub raw_answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugSummary {
    pub failure_id: String,
    pub summary: String,
    pub description: String,
    pub summary_word_count: usize,
}

impl BugSummary {
    pub fn new(failure_id: &str, summary: &str, description: &str) -> Self {
        Self {
            failure_id: failure_id.into(),
            summary: summary.into(),
            description: description.into(),
            summary_word_count: crate::text::word_count(summary),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateCluster {
    pub representative: String,
    /// Sorted ascending; always contains the representative.
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_existing: Option<TicketRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    TicketFiled { ticket: TicketRef },
    DuplicateOf { ticket: TicketRef },
    Notified,
    None,
}

impl Action {
    pub fn ticket(&self) -> Option<&TicketRef> {
        match self {
            Action::TicketFiled { ticket } | Action::DuplicateOf { ticket } => Some(ticket),
            _ => None,
        }
    }
}

/// Per-stage wall time in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimings {
    pub extract_us: u64,
    pub root_error_us: u64,
    pub diagnosis_us: u64,
    pub summarization_us: u64,
    pub dedup_us: u64,
    pub action_us: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageOutcome {
    pub failure_id: String,
    pub digest_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_cause: Option<RootCauseFinding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<DiagnosisVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<BugSummary>,
    /// Representative failure id of this failure's duplicate cluster.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<String>,
    pub action: Action,
    pub stage_timings: StageTimings,
    /// Digest attached when summarization failed and a human must look.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attached_digest: Option<ErrorDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl TriageOutcome {
    pub fn new(failure_id: &str) -> Self {
        Self {
            failure_id: failure_id.into(),
            digest_size: 0,
            root_cause: None,
            verdict: None,
            summary: None,
            cluster: None,
            action: Action::None,
            stage_timings: StageTimings::default(),
            attached_digest: None,
            error: None,
            warnings: Vec::new(),
        }
    }

    pub fn is_errored(&self) -> bool {
        self.error.is_some()
    }

    pub fn is_bug(&self) -> Option<bool> {
        self.verdict.as_ref().map(|v| v.is_bug)
    }
}

/// Errors from a single stage for one failure.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("root error analysis needs a non-empty digest")]
    EmptyDigest,
    #[error("summarization failed twice: {reason}")]
    Summarization {
        reason: String,
        raw_completion: String,
    },
}

/// Errors that abort a whole request.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    #[error("chat backend unavailable, retry later: {0}")]
    BackendUnavailable(BackendError),
}
