use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    analyze_root_error, detect_duplicates, diagnose, summarize, Action, DuplicateCluster,
    PipelineError, StageError, TriageOutcome,
};
use crate::action::{
    compose_notification, dry_run_ticket, select_action, ActionInput, ActionKind, ActionSink,
    DeliveryStatus,
};
use crate::backend::{ChatBackend, Profiles};
use crate::ingestion::{extract_errors, ErrorDigest, PatternRegistry, TestFailure};
use crate::request::{RequestOptions, TriageRequest};
use crate::template::TemplateSet;

/// Monotonic time source for stage timings.
pub trait Clock {
    fn now_us(&self) -> u64;
}

/// Reports zero for every reading; keeps outcomes byte-stable.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_us(&self) -> u64 {
        0
    }
}

/// Everything the analysis stages need, borrowed for one request.
pub struct Pipeline<'a, B: ?Sized> {
    pub patterns: &'a PatternRegistry,
    pub backend: &'a B,
    pub profiles: &'a Profiles,
    pub templates: &'a TemplateSet,
    pub clock: &'a (dyn Clock + Sync),
}

impl<B: ?Sized> Clone for Pipeline<'_, B> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<B: ?Sized> Copy for Pipeline<'_, B> {}

/// Per-failure stage results, before dedup and actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureAnalysis {
    pub outcome: TriageOutcome,
    pub digest: ErrorDigest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// In submission order.
    pub outcomes: Vec<TriageOutcome>,
    pub clusters: Vec<DuplicateCluster>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notification: Option<DeliveryStatus>,
}

fn elapsed(clock: &(dyn Clock + Sync), start: u64) -> u64 {
    clock.now_us().saturating_sub(start)
}

// Unavailable backends abort the request; anything else stays on the outcome.
fn absorb(outcome: &mut TriageOutcome, err: StageError) -> Result<(), PipelineError> {
    match err {
        StageError::Backend(e) if e.is_unavailable() => Err(PipelineError::BackendUnavailable(e)),
        other => {
            outcome.error = Some(other.to_string());
            Ok(())
        }
    }
}

const RAW_EXCERPT_CHARS: usize = 500;

/// Extraction, root analysis, diagnosis and (for bugs) summarization of one
/// failure.
pub fn analyze_failure<B: ChatBackend + ?Sized>(
    p: Pipeline<'_, B>,
    failure: &TestFailure,
) -> Result<FailureAnalysis, PipelineError> {
    let mut outcome = TriageOutcome::new(&failure.failure_id);

    let t = p.clock.now_us();
    let digest = extract_errors(failure, p.patterns);
    outcome.stage_timings.extract_us = elapsed(p.clock, t);
    outcome.digest_size = digest.len();
    outcome.warnings.extend(digest.provenance.iter().cloned());
    if digest.is_empty() {
        return Ok(FailureAnalysis { outcome, digest });
    }

    let t = p.clock.now_us();
    let root = analyze_root_error(
        &digest,
        p.backend,
        &p.profiles.root_error_analysis,
        &p.templates.root_error,
    );
    outcome.stage_timings.root_error_us = elapsed(p.clock, t);
    let finding = match root {
        Ok(f) => f,
        Err(e) => {
            absorb(&mut outcome, e)?;
            return Ok(FailureAnalysis { outcome, digest });
        }
    };

    let t = p.clock.now_us();
    let verdict = diagnose(
        &finding,
        p.backend,
        &p.profiles.bug_diagnosis,
        &p.templates.diagnosis,
    );
    outcome.stage_timings.diagnosis_us = elapsed(p.clock, t);
    outcome.root_cause = Some(finding);
    let verdict = match verdict {
        Ok(v) => v,
        Err(e) => {
            absorb(&mut outcome, e)?;
            return Ok(FailureAnalysis { outcome, digest });
        }
    };
    let is_bug = verdict.is_bug;
    outcome.verdict = Some(verdict);
    if !is_bug {
        return Ok(FailureAnalysis { outcome, digest });
    }

    let finding = outcome.root_cause.as_ref().expect("set above");
    let t = p.clock.now_us();
    let summary = summarize(
        finding,
        p.backend,
        &p.profiles.bug_summarization,
        &p.templates.summarize_chain,
    );
    outcome.stage_timings.summarization_us = elapsed(p.clock, t);
    match summary {
        Ok(s) => outcome.summary = Some(s),
        Err(StageError::Summarization {
            reason,
            raw_completion,
        }) => {
            let excerpt: String = raw_completion.chars().take(RAW_EXCERPT_CHARS).collect();
            outcome.warnings.push(format!(
                "summarization failed ({reason}); raw completion: {excerpt}"
            ));
            outcome.attached_digest = Some(digest.clone());
        }
        Err(e) => absorb(&mut outcome, e)?,
    }
    Ok(FailureAnalysis { outcome, digest })
}

/// Request-wide duplicate detection followed by ticket filing and
/// notification.
pub fn finish_request<B: ChatBackend + ?Sized, S: ActionSink + ?Sized>(
    p: Pipeline<'_, B>,
    request_id: Option<&str>,
    options: RequestOptions,
    analyses: Vec<FailureAnalysis>,
    sink: &mut S,
) -> PipelineReport {
    let mut outcomes: Vec<TriageOutcome> = analyses.into_iter().map(|a| a.outcome).collect();
    let mut warnings = Vec::new();

    let summaries: Vec<_> = outcomes
        .iter()
        .filter(|o| !o.is_errored())
        .filter_map(|o| o.summary.clone())
        .collect();
    let open_reports = if options.dedup_against_registry && !summaries.is_empty() {
        sink.open_reports()
    } else {
        Vec::new()
    };

    let t = p.clock.now_us();
    let dedup = detect_duplicates(
        &summaries,
        &open_reports,
        p.backend,
        &p.profiles.duplicate_detection,
        &p.templates.duplicate,
    );
    let dedup_us = elapsed(p.clock, t);
    warnings.extend(dedup.warnings);

    let position: BTreeMap<String, usize> = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| (o.failure_id.clone(), i))
        .collect();

    let mut dry_run_seq = 0;
    for cluster in &dedup.clusters {
        let rep = position[&cluster.representative];
        for member in &cluster.members {
            let o = &mut outcomes[position[member]];
            o.cluster = Some(cluster.representative.clone());
            o.stage_timings.dedup_us = dedup_us;
        }

        let input = |representative: bool| ActionInput {
            digest_empty: false,
            is_bug: Some(true),
            has_summary: true,
            representative,
            matched_existing: cluster.matched_existing.is_some(),
        };

        let t = p.clock.now_us();
        let ticket = match select_action(&input(true)) {
            ActionKind::FileTicket if options.dry_run => {
                dry_run_seq += 1;
                Ok(dry_run_ticket(dry_run_seq))
            }
            ActionKind::FileTicket => {
                let summary = outcomes[rep]
                    .summary
                    .as_ref()
                    .expect("clustered outcomes have summaries");
                match sink.file_ticket(summary) {
                    Ok(filing) => {
                        if let Some(w) = filing.registry_warning {
                            outcomes[rep].warnings.push(w);
                        }
                        Ok(filing.ticket)
                    }
                    Err(e) => Err(e),
                }
            }
            _ => Ok(cluster
                .matched_existing
                .clone()
                .expect("only matched clusters skip filing")),
        };
        outcomes[rep].stage_timings.action_us = elapsed(p.clock, t);

        match ticket {
            Ok(ticket) => {
                for member in &cluster.members {
                    let i = position[member];
                    let kind = select_action(&input(i == rep));
                    outcomes[i].action = match kind {
                        ActionKind::FileTicket => Action::TicketFiled {
                            ticket: ticket.clone(),
                        },
                        _ => Action::DuplicateOf {
                            ticket: ticket.clone(),
                        },
                    };
                }
            }
            Err(e) => {
                outcomes[rep].error = Some(format!("ticket filing failed: {e}"));
                for member in &cluster.members {
                    let i = position[member];
                    if i != rep {
                        outcomes[i].error = Some(format!(
                            "ticket filing for representative {} failed",
                            cluster.representative
                        ));
                    }
                }
            }
        }
    }

    for o in outcomes
        .iter_mut()
        .filter(|o| !o.is_errored() && o.cluster.is_none())
    {
        let kind = select_action(&ActionInput {
            digest_empty: o.digest_size == 0,
            is_bug: o.is_bug(),
            has_summary: o.summary.is_some(),
            representative: false,
            matched_existing: false,
        });
        if kind == ActionKind::Notify {
            o.action = Action::Notified;
        }
    }

    let notified: Vec<&TriageOutcome> = outcomes
        .iter()
        .filter(|o| o.action == Action::Notified)
        .collect();
    let notification = compose_notification(request_id, &notified).map(|draft| {
        if options.dry_run {
            DeliveryStatus::Skipped {
                reason: "dry run".into(),
            }
        } else {
            sink.notify(&draft)
        }
    });
    if let Some(DeliveryStatus::Failed { reason, attempts }) = &notification {
        warnings.push(format!(
            "notification delivery failed after {attempts} attempt(s): {reason}"
        ));
    }

    PipelineReport {
        outcomes,
        clusters: dedup.clusters,
        warnings,
        notification,
    }
}

/// Runs every stage for a request, sequentially.
pub fn run_pipeline<B: ChatBackend + ?Sized, S: ActionSink + ?Sized>(
    p: Pipeline<'_, B>,
    request: &TriageRequest,
    sink: &mut S,
) -> Result<PipelineReport, PipelineError> {
    let analyses = request
        .failures
        .iter()
        .map(|f| analyze_failure(p, f))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(finish_request(
        p,
        request.request_id.as_deref(),
        request.options,
        analyses,
        sink,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{
        ActionError, NotificationDraft, NullSink, OpenReport, TicketFiling, TicketRef,
    };
    use crate::backend::{BackendError, ChatMessage, CompletionResult, ModelProfile};
    use crate::ingestion::PatternSpec;
    use crate::mock::MockBackend;
    use crate::pipeline::BugSummary;
    use alloc::vec;

    struct Env {
        patterns: PatternRegistry,
        profiles: Profiles,
        templates: TemplateSet,
    }

    impl Env {
        fn new() -> Self {
            Self {
                patterns: PatternRegistry::new(&[
                    PatternSpec::new("oserror", "OSError", 1),
                    PatternSpec::new("error", "Error|error", 10),
                ])
                .unwrap(),
                profiles: Profiles::defaults("mock://"),
                templates: TemplateSet::embedded(),
            }
        }

        fn pipeline<'a, B: ?Sized>(&'a self, backend: &'a B) -> Pipeline<'a, B> {
            Pipeline {
                patterns: &self.patterns,
                backend,
                profiles: &self.profiles,
                templates: &self.templates,
                clock: &NoClock,
            }
        }
    }

    #[derive(Default)]
    struct FakeSink {
        filed: Vec<String>,
        notes: Vec<NotificationDraft>,
        open: Vec<OpenReport>,
    }

    impl ActionSink for FakeSink {
        fn open_reports(&self) -> Vec<OpenReport> {
            self.open.clone()
        }

        fn file_ticket(&mut self, summary: &BugSummary) -> Result<TicketFiling, ActionError> {
            self.filed.push(summary.failure_id.clone());
            let key = format!("TEST-{}", self.filed.len());
            Ok(TicketFiling {
                ticket: TicketRef {
                    url: format!("https://t.example/browse/{key}"),
                    tracker_key: key,
                    created_at: "2026-01-01T00:00:00Z".into(),
                },
                registry_warning: None,
            })
        }

        fn notify(&mut self, draft: &NotificationDraft) -> DeliveryStatus {
            self.notes.push(draft.clone());
            DeliveryStatus::Delivered { attempts: 1 }
        }
    }

    fn request(logs: &[(&str, &str)]) -> TriageRequest {
        TriageRequest::new(
            logs.iter()
                .map(|(id, log)| TestFailure::new(*id, *log))
                .collect(),
        )
    }

    #[test]
    fn no_space_is_notified() {
        let env = Env::new();
        let mock = MockBackend::reference();
        let mut sink = FakeSink::default();
        let report = run_pipeline(
            env.pipeline(&mock),
            &request(&[(
                "t1",
                "step 1\nOSError: [Errno 28] No space left on device\n",
            )]),
            &mut sink,
        )
        .unwrap();
        let o = &report.outcomes[0];
        assert_eq!(o.action, Action::Notified);
        assert!(o.summary.is_none());
        assert_eq!(o.is_bug(), Some(false));
        assert!(sink.filed.is_empty());
        assert_eq!(sink.notes.len(), 1);
        assert_eq!(sink.notes[0].failure_ids, ["t1"]);
    }

    #[test]
    fn identical_digests_file_one_ticket() {
        let env = Env::new();
        let mock = MockBackend::reference();
        let mut sink = FakeSink::default();
        let log = "TypeError: Input 'y' of 'Add' Op has type bfloat16";
        let report = run_pipeline(
            env.pipeline(&mock),
            &request(&[("b", log), ("a", log)]),
            &mut sink,
        )
        .unwrap();
        assert_eq!(sink.filed, ["a"]);
        assert!(matches!(
            report.outcomes[1].action,
            Action::TicketFiled { .. }
        ));
        match &report.outcomes[0].action {
            Action::DuplicateOf { ticket } => assert_eq!(ticket.tracker_key, "TEST-1"),
            other => panic!("{other:?}"),
        }
        assert_eq!(report.clusters.len(), 1);
    }

    #[test]
    fn empty_request() {
        let env = Env::new();
        let mock = MockBackend::reference();
        let report = run_pipeline(env.pipeline(&mock), &request(&[]), &mut NullSink).unwrap();
        assert!(report.outcomes.is_empty());
        assert!(report.notification.is_none());
    }

    #[test]
    fn empty_digest_notifies_without_analysis() {
        let env = Env::new();
        let mock = MockBackend::reference();
        let mut sink = FakeSink::default();
        let report = run_pipeline(
            env.pipeline(&mock),
            &request(&[("t", "all fine\n")]),
            &mut sink,
        )
        .unwrap();
        let o = &report.outcomes[0];
        assert_eq!(o.digest_size, 0);
        assert!(o.root_cause.is_none());
        assert_eq!(o.action, Action::Notified);
    }

    #[test]
    fn dry_run_touches_no_sink() {
        let env = Env::new();
        let mock = MockBackend::reference();
        let mut sink = FakeSink::default();
        let mut req = request(&[
            ("a", "TypeError: bad"),
            ("b", "OSError: [Errno 28] No space left on device"),
        ]);
        req.options.dry_run = true;
        let report = run_pipeline(env.pipeline(&mock), &req, &mut sink).unwrap();
        assert!(sink.filed.is_empty());
        assert!(sink.notes.is_empty());
        match &report.outcomes[0].action {
            Action::TicketFiled { ticket } => assert_eq!(ticket.tracker_key, "DRYRUN-1"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            report.notification,
            Some(DeliveryStatus::Skipped { .. })
        ));
    }

    #[test]
    fn matched_open_report_is_not_refiled() {
        let env = Env::new();
        let mock = MockBackend::reference();
        let log = "KeyError: 'device'";
        // learn what the mock will summarize so the registry holds the same text
        let mut probe = FakeSink::default();
        let first = run_pipeline(env.pipeline(&mock), &request(&[("x", log)]), &mut probe).unwrap();
        let s = first.outcomes[0].summary.clone().unwrap();
        let existing = TicketRef {
            tracker_key: "OLD-7".into(),
            url: "https://t.example/browse/OLD-7".into(),
            created_at: "2026-01-01T00:00:00Z".into(),
        };
        let mut sink = FakeSink {
            open: vec![OpenReport::open(existing.clone(), &s)],
            ..FakeSink::default()
        };
        let report = run_pipeline(env.pipeline(&mock), &request(&[("y", log)]), &mut sink).unwrap();
        assert!(sink.filed.is_empty());
        assert_eq!(
            report.outcomes[0].action,
            Action::DuplicateOf { ticket: existing }
        );
    }

    struct Down;

    impl ChatBackend for Down {
        fn complete(
            &self,
            _m: &[ChatMessage],
            _p: &ModelProfile,
        ) -> Result<CompletionResult, BackendError> {
            Err(BackendError::Unavailable {
                attempts: 3,
                message: "connection refused".into(),
            })
        }
    }

    #[test]
    fn unavailable_backend_aborts() {
        let env = Env::new();
        let err = run_pipeline(
            env.pipeline(&Down),
            &request(&[("a", "TypeError: x\nValueError: y")]),
            &mut NullSink,
        )
        .unwrap_err();
        assert!(matches!(err, PipelineError::BackendUnavailable(_)));
    }

    struct Broken;

    impl ChatBackend for Broken {
        fn complete(
            &self,
            _m: &[ChatMessage],
            _p: &ModelProfile,
        ) -> Result<CompletionResult, BackendError> {
            Err(BackendError::Protocol("garbage".into()))
        }
    }

    #[test]
    fn stage_error_marks_outcome_only() {
        let env = Env::new();
        let report = run_pipeline(
            env.pipeline(&Broken),
            &request(&[("a", "TypeError: x\nValueError: y"), ("b", "nothing")]),
            &mut FakeSink::default(),
        )
        .unwrap();
        assert!(report.outcomes[0].is_errored());
        assert_eq!(report.outcomes[0].action, Action::None);
        assert_eq!(report.outcomes[1].action, Action::Notified);
    }
}
