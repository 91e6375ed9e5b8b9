//! Post-analysis actions: ticket filing, notifications and the choice
//! between them.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::pipeline::{BugSummary, TriageOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TicketRef {
    pub tracker_key: String,
    pub url: String,
    /// RFC 3339 creation time.
    pub created_at: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportStatus {
    Open,
    Resolved,
}

/// A filed ticket as remembered by the report registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenReport {
    pub ticket: TicketRef,
    pub summary: String,
    pub description: String,
    pub status: ReportStatus,
}

impl OpenReport {
    pub fn open(ticket: TicketRef, summary: &BugSummary) -> Self {
        Self {
            ticket,
            summary: summary.summary.clone(),
            description: summary.description.clone(),
            status: ReportStatus::Open,
        }
    }

    pub fn is_open(&self) -> bool {
        self.status == ReportStatus::Open
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub recipients: Vec<String>,
    pub subject: String,
    pub body: String,
    pub failure_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NotificationError {
    #[error("notification has no recipients")]
    NoRecipients,
    #[error("invalid recipient address `{0}`")]
    BadAddress(String),
    #[error("notification subject is empty")]
    EmptySubject,
}

impl Notification {
    pub fn validate(&self) -> Result<(), NotificationError> {
        if self.recipients.is_empty() {
            return Err(NotificationError::NoRecipients);
        }
        for r in &self.recipients {
            let ok = matches!(r.split_once('@'), Some((user, host)) if !user.is_empty() && !host.is_empty() && !host.contains('@'));
            if !ok {
                return Err(NotificationError::BadAddress(r.clone()));
            }
        }
        if self.subject.trim().is_empty() {
            return Err(NotificationError::EmptySubject);
        }
        Ok(())
    }
}

/// Subject, body and failures of a notification; recipients come from the
/// mail configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationDraft {
    pub subject: String,
    pub body: String,
    pub failure_ids: Vec<String>,
}

impl NotificationDraft {
    pub fn addressed_to(&self, recipients: Vec<String>) -> Notification {
        Notification {
            recipients,
            subject: self.subject.clone(),
            body: self.body.clone(),
            failure_ids: self.failure_ids.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeliveryStatus {
    Delivered { attempts: u32 },
    Failed { attempts: u32, reason: String },
    Skipped { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    FileTicket,
    DuplicateOf,
    Notify,
}

/// What is known about a failure once diagnosis and dedup are settled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionInput {
    pub digest_empty: bool,
    pub is_bug: Option<bool>,
    pub has_summary: bool,
    pub representative: bool,
    pub matched_existing: bool,
}

pub fn select_action(input: &ActionInput) -> ActionKind {
    if input.digest_empty || input.is_bug != Some(true) || !input.has_summary {
        ActionKind::Notify
    } else if input.representative && !input.matched_existing {
        ActionKind::FileTicket
    } else {
        ActionKind::DuplicateOf
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionError {
    #[error("tracker rejected credentials: {0}")]
    Auth(String),
    #[error("tracker rejected the ticket with status {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("tracker unreachable after {attempts} attempt(s): {message}")]
    Exhausted { attempts: u32, message: String },
    #[error("tracker is not configured")]
    NotConfigured,
}

/// A created ticket, plus a warning when the registry could not record it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TicketFiling {
    pub ticket: TicketRef,
    pub registry_warning: Option<String>,
}

/// Side-effecting half of the action module. Only consulted outside dry
/// runs, except for `open_reports`, which dedup reads in every mode.
pub trait ActionSink {
    /// Open reports in registry order.
    fn open_reports(&self) -> Vec<OpenReport>;

    fn file_ticket(&mut self, summary: &BugSummary) -> Result<TicketFiling, ActionError>;

    fn notify(&mut self, draft: &NotificationDraft) -> DeliveryStatus;
}

/// A sink with no tracker, no mail and an empty registry.
#[derive(Debug, Default, Clone)]
pub struct NullSink;

impl ActionSink for NullSink {
    fn open_reports(&self) -> Vec<OpenReport> {
        Vec::new()
    }

    fn file_ticket(&mut self, _summary: &BugSummary) -> Result<TicketFiling, ActionError> {
        Err(ActionError::NotConfigured)
    }

    fn notify(&mut self, _draft: &NotificationDraft) -> DeliveryStatus {
        DeliveryStatus::Skipped {
            reason: "mail is not configured".into(),
        }
    }
}

pub const DRY_RUN_CREATED_AT: &str = "1970-01-01T00:00:00Z";

/// Placeholder ticket recorded instead of a real one in dry runs.
pub fn dry_run_ticket(n: usize) -> TicketRef {
    let key = format!("DRYRUN-{n}");
    TicketRef {
        url: format!("dry-run://{key}"),
        tracker_key: key,
        created_at: DRY_RUN_CREATED_AT.into(),
    }
}

/// One email covering every notified failure of a request.
pub fn compose_notification(
    request_id: Option<&str>,
    notified: &[&TriageOutcome],
) -> Option<NotificationDraft> {
    if notified.is_empty() {
        return None;
    }
    let subject = match request_id {
        Some(id) => format!(
            "[bugblitz] {} failure(s) need attention ({id})",
            notified.len()
        ),
        None => format!("[bugblitz] {} failure(s) need attention", notified.len()),
    };
    let mut body = String::new();
    for outcome in notified {
        body.push_str(&format!("Failure: {}\n", outcome.failure_id));
        let verdict = match (&outcome.verdict, outcome.digest_size) {
            (_, 0) => "no error line matched the pattern list",
            (Some(v), _) if !v.is_bug => "test environment issue",
            (Some(_), _) => "bug, but no ticket summary could be produced",
            (None, _) => "not diagnosed",
        };
        body.push_str(&format!("Verdict: {verdict}\n"));
        if let Some(v) = &outcome.verdict {
            if !v.reasoning.is_empty() {
                body.push_str(&format!("Reasoning: {}\n", v.reasoning));
            }
        }
        if let Some(root) = &outcome.root_cause {
            body.push_str(&format!(
                "Root error (line {}): {}\n",
                root.chosen_record.line_number,
                root.chosen_record.matched_line.trim()
            ));
        }
        if let Some(digest) = &outcome.attached_digest {
            for r in &digest.records {
                body.push_str(&format!("  [{}] {}\n", r.index, r.matched_line.trim()));
            }
        }
        body.push('\n');
    }
    Some(NotificationDraft {
        subject,
        body,
        failure_ids: notified.iter().map(|o| o.failure_id.clone()).collect(),
    })
}
