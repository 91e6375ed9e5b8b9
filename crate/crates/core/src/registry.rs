//! Open-report registry state and its append-log encoding.
//!
//! The durable form is a snapshot (every known report) plus a log of events
//! applied on top, one JSON object per line. Replay ignores a final line
//! without its newline, so a crash mid-append loses at most that event.
//! Applying an event twice has the same effect as applying it once, which
//! makes replaying a log over a newer snapshot harmless.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::action::{OpenReport, ReportStatus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RegistryEvent {
    Opened { report: OpenReport },
    Resolved { tracker_key: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("no report with key `{0}`")]
    NotFound(String),
    #[error("registry log line {line} is corrupt: {message}")]
    CorruptLog { line: usize, message: String },
    #[error("registry snapshot is corrupt: {0}")]
    CorruptSnapshot(String),
}

/// All known reports in filing order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReportSet {
    reports: Vec<OpenReport>,
}

impl ReportSet {
    pub fn new(reports: Vec<OpenReport>) -> Self {
        let mut set = Self::default();
        for r in reports {
            set.upsert(r);
        }
        set
    }

    fn upsert(&mut self, report: OpenReport) {
        match self
            .reports
            .iter_mut()
            .find(|r| r.ticket.tracker_key == report.ticket.tracker_key)
        {
            Some(slot) => *slot = report,
            None => self.reports.push(report),
        }
    }

    pub fn get(&self, tracker_key: &str) -> Option<&OpenReport> {
        self.reports
            .iter()
            .find(|r| r.ticket.tracker_key == tracker_key)
    }

    /// Checks that `event` can be applied, without changing anything.
    pub fn check(&self, event: &RegistryEvent) -> Result<(), RegistryError> {
        match event {
            RegistryEvent::Opened { .. } => Ok(()),
            RegistryEvent::Resolved { tracker_key } => self
                .get(tracker_key)
                .map(|_| ())
                .ok_or_else(|| RegistryError::NotFound(tracker_key.clone())),
        }
    }

    pub fn apply(&mut self, event: RegistryEvent) -> Result<(), RegistryError> {
        self.check(&event)?;
        match event {
            RegistryEvent::Opened { report } => self.upsert(report),
            RegistryEvent::Resolved { tracker_key } => {
                if let Some(r) = self
                    .reports
                    .iter_mut()
                    .find(|r| r.ticket.tracker_key == tracker_key)
                {
                    r.status = ReportStatus::Resolved;
                }
            }
        }
        Ok(())
    }

    pub fn all(&self) -> &[OpenReport] {
        &self.reports
    }

    pub fn open(&self) -> impl Iterator<Item = &OpenReport> {
        self.reports.iter().filter(|r| r.is_open())
    }

    pub fn open_count(&self) -> usize {
        self.open().count()
    }

    pub fn into_reports(self) -> Vec<OpenReport> {
        self.reports
    }
}

/// One log line, newline included.
pub fn encode_event(event: &RegistryEvent) -> String {
    let mut line = serde_json::to_string(event).expect("registry events always serialize");
    line.push('\n');
    line
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replay {
    pub set: ReportSet,
    /// Complete events applied from the log.
    pub applied: usize,
    /// Length of the log prefix made of complete lines.
    pub valid_len: usize,
}

impl Replay {
    pub fn torn_tail(&self, log_len: usize) -> bool {
        self.valid_len < log_len
    }
}

/// Rebuilds the registry from a snapshot and the bytes of the event log.
pub fn replay(snapshot: Vec<OpenReport>, log: &[u8]) -> Result<Replay, RegistryError> {
    let mut set = ReportSet::new(snapshot);
    let mut applied = 0;
    let mut offset = 0;
    let mut line_no = 0;
    while let Some(len) = log[offset..].iter().position(|&b| b == b'\n') {
        line_no += 1;
        let line = &log[offset..offset + len];
        offset += len + 1;
        let text = core::str::from_utf8(line).map_err(|e| RegistryError::CorruptLog {
            line: line_no,
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let event: RegistryEvent =
            serde_json::from_str(text).map_err(|e| RegistryError::CorruptLog {
                line: line_no,
                message: e.to_string(),
            })?;
        // resolving an unknown key is never logged; tolerate it anyway
        let _ = set.apply(event);
        applied += 1;
    }
    Ok(Replay {
        set,
        applied,
        valid_len: offset,
    })
}
