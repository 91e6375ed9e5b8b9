//! Report rendering for the CLI: pretty JSON or a plain-text table.

use std::fmt::Write;

use bugblitz_core::evaluation::{CleansingReport, MetricsReport};
use bugblitz_core::pipeline::Action;
use bugblitz_core::TriageOutcome;
use serde::Serialize;

use crate::service::TriageResponse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Table,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn action_cell(o: &TriageOutcome) -> String {
    if let Some(e) = &o.error {
        return format!("error: {e}");
    }
    match &o.action {
        Action::TicketFiled { ticket } => format!("ticket {}", ticket.tracker_key),
        Action::DuplicateOf { ticket } => format!("duplicate of {}", ticket.tracker_key),
        Action::Notified => "notified".into(),
        Action::None => "-".into(),
    }
}

pub fn render_triage(r: &TriageResponse, format: Format) -> String {
    if format == Format::Json {
        return to_json(r);
    }
    let mut out = String::new();
    let status = serde_json::to_value(r.status).unwrap();
    let _ = writeln!(
        out,
        "request {}  status {}",
        r.request_id,
        status.as_str().unwrap_or("")
    );
    let _ = writeln!(
        out,
        "{:<28} {:>6} {:>5} {:<8} {:<24} summary",
        "failure", "errors", "root", "verdict", "action"
    );
    for o in &r.outcomes {
        let root = o
            .root_cause
            .as_ref()
            .map(|f| f.chosen_index.to_string())
            .unwrap_or_else(|| "-".into());
        let verdict = match o.is_bug() {
            Some(true) => "bug",
            Some(false) => "env",
            None => "-",
        };
        let summary = o.summary.as_ref().map(|s| s.summary.as_str()).unwrap_or("");
        let _ = writeln!(
            out,
            "{:<28} {:>6} {:>5} {:<8} {:<24} {}",
            o.failure_id,
            o.digest_size,
            root,
            verdict,
            action_cell(o),
            summary
        );
    }
    for w in &r.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

fn fraction(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

pub fn render_metrics(m: &MetricsReport, format: Format) -> String {
    if format == Format::Json {
        return to_json(m);
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "recall        {}  ({} of {} bugs identified)",
        fraction(m.recall),
        m.bugs_identified,
        m.bugs_total
    );
    let _ = writeln!(
        out,
        "precision     {}  ({} of {} tickets clean)",
        fraction(m.precision),
        m.tickets_clean,
        m.tickets_posted
    );
    let _ = writeln!(
        out,
        "root accuracy {}  ({} of {} analyzed)",
        fraction(m.root_accuracy),
        m.root_correct,
        m.root_scored
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<28} {:<5} {:<9} {:<7} {:<6} root",
        "sample", "label", "predicted", "ticket", "clean"
    );
    let flag = |b: bool| if b { "yes" } else { "no" };
    for s in &m.per_sample {
        let predicted = match s.predicted_is_bug {
            Some(true) => "bug",
            Some(false) => "env",
            None => "-",
        };
        let root = match (s.chosen_index, s.root_correct) {
            (Some(i), Some(true)) => format!("{i} ok"),
            (Some(i), Some(false)) => format!("{i} wrong"),
            (Some(i), None) => i.to_string(),
            (None, _) => "-".into(),
        };
        let _ = writeln!(
            out,
            "{:<28} {:<5} {:<9} {:<7} {:<6} {}",
            s.sample_id,
            if s.label_is_bug { "bug" } else { "env" },
            predicted,
            flag(s.ticket_posted),
            flag(s.ticket_clean),
            root
        );
    }
    out
}

pub fn render_cleansing(r: &CleansingReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} sample(s) in, {} exported",
        r.samples_in, r.samples_exported
    );
    for (rule, n) in &r.dropped {
        let _ = writeln!(out, "dropped by {rule}: {n}");
    }
    if r.non_printable_stripped > 0 {
        let _ = writeln!(
            out,
            "non-printable characters stripped from {} sample(s)",
            r.non_printable_stripped
        );
    }
    out
}
