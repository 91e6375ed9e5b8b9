mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use bugblitz::llm::{Backend, RemoteBackend};
use bugblitz::mail::Mailer;
use bugblitz::service::{JobStatus, ResponseStatus, Service, ServiceError, ServiceParts};
use bugblitz::store::RegistryStore;
use bugblitz::tracker::TrackerClient;
use bugblitz_core::pipeline::Action;
use bugblitz_core::{DeliveryStatus, MockBackend, Profiles, TestFailure};
use common::*;

fn mock_parts() -> ServiceParts {
    ServiceParts::new(builtin(), Arc::new(MockBackend::reference()))
}

fn bug(id: &str) -> TestFailure {
    TestFailure::new(
        id,
        format!("step 1\nRuntimeError: kernel {id} produced NaN\n"),
    )
}

fn env(id: &str) -> TestFailure {
    TestFailure::new(id, "OSError: [Errno 28] No space left on device\n")
}

fn posted(tracker: &FakeHttp) -> usize {
    tracker
        .requests()
        .iter()
        .filter(|r| r.path == "/rest/api/2/issue")
        .count()
}

#[test]
fn dry_run_never_contacts_tracker() {
    let tracker = fake_tracker();
    let mut parts = mock_parts();
    parts.tracker = Some(TrackerClient::new(tracker_config(&tracker), None));
    let service = Service::new(parts);
    let mut req = request(corpus_failures());
    req.options.dry_run = true;
    let resp = service.triage(req).unwrap();
    assert_eq!(tracker.count(), 0);
    assert_eq!(resp.status, ResponseStatus::Completed);
    let filed = resp
        .outcomes
        .iter()
        .filter(|o| matches!(&o.action, Action::TicketFiled { ticket } if ticket.tracker_key.starts_with("DRYRUN-")))
        .count();
    assert_eq!(filed, 16);
    assert!(matches!(
        resp.notification,
        Some(DeliveryStatus::Skipped { .. })
    ));
    assert!(service.store().reports().is_empty());
}

#[test]
fn live_run_files_once_per_cluster_and_remembers() {
    let tracker = fake_tracker();
    let dir = tempfile::tempdir().unwrap();
    let mut parts = mock_parts();
    parts.tracker = Some(TrackerClient::new(
        tracker_config(&tracker),
        Some("secret".into()),
    ));
    parts.store = RegistryStore::open(dir.path()).unwrap();
    let service = Service::new(parts);

    let first = service.triage(request(corpus_failures())).unwrap();
    assert_eq!(first.status, ResponseStatus::Completed);
    assert_eq!(posted(&tracker), 16);
    assert_eq!(
        tracker.requests()[0].header("authorization"),
        Some("Bearer secret")
    );
    let body = tracker.requests()[0].json();
    assert_eq!(body["fields"]["project"]["key"], "PROJ");
    assert_eq!(body["fields"]["issuetype"]["name"], "Bug");
    assert_eq!(service.store().open_reports().len(), 16);
    drop(service);

    // a fresh service over the same registry directory sees the open reports
    let mut parts = mock_parts();
    parts.tracker = Some(TrackerClient::new(tracker_config(&tracker), None));
    parts.store = RegistryStore::open(dir.path()).unwrap();
    let service = Service::new(parts);
    let second = service.triage(request(corpus_failures())).unwrap();
    assert_eq!(posted(&tracker), 16, "no new tickets for known defects");
    for o in second.outcomes.iter().filter(|o| o.is_bug() == Some(true)) {
        assert!(
            matches!(o.action, Action::DuplicateOf { .. }),
            "{}",
            o.failure_id
        );
    }
}

#[test]
fn resolved_report_no_longer_suppresses() {
    let tracker = fake_tracker();
    let mut parts = mock_parts();
    parts.tracker = Some(TrackerClient::new(tracker_config(&tracker), None));
    let service = Service::new(parts);
    let first = service.triage(request(vec![bug("a")])).unwrap();
    let key = first.outcomes[0]
        .action
        .ticket()
        .unwrap()
        .tracker_key
        .clone();
    service.store().mark_resolved(&key).unwrap();
    let second = service.triage(request(vec![bug("a")])).unwrap();
    assert!(matches!(
        second.outcomes[0].action,
        Action::TicketFiled { .. }
    ));
    assert_eq!(posted(&tracker), 2);
}

#[test]
fn tracker_auth_failure_is_not_retried() {
    let tracker = failing_tracker(401);
    let mut parts = mock_parts();
    parts.tracker = Some(TrackerClient::new(tracker_config(&tracker), None));
    let service = Service::new(parts);
    let resp = service.triage(request(vec![bug("a"), env("b")])).unwrap();
    assert_eq!(tracker.count(), 1);
    assert_eq!(resp.status, ResponseStatus::Partial);
    let err = resp.outcomes[0].error.as_deref().unwrap();
    assert!(err.contains("credentials"), "{err}");
    assert!(resp.outcomes[1].error.is_none());
}

#[test]
fn tracker_server_errors_are_retried_then_reported() {
    let tracker = failing_tracker(503);
    let mut parts = mock_parts();
    parts.tracker = Some(TrackerClient::new(tracker_config(&tracker), None));
    let service = Service::new(parts);
    let resp = service.triage(request(vec![bug("a")])).unwrap();
    assert_eq!(tracker.count(), 3);
    assert_eq!(resp.status, ResponseStatus::Failed);
    assert!(resp.outcomes[0].error.as_deref().unwrap().contains('3'));
}

#[test]
fn missing_tracker_fails_bug_outcomes_only() {
    let service = Service::new(mock_parts());
    let resp = service.triage(request(vec![bug("a"), env("b")])).unwrap();
    assert_eq!(resp.status, ResponseStatus::Partial);
    assert!(resp.outcomes[0].error.is_some());
    assert_eq!(resp.outcomes[1].action, Action::Notified);
}

#[test]
fn environment_failures_are_mailed() {
    let smtp = FakeSmtp::start();
    let mut parts = mock_parts();
    parts.mailer = Some(Mailer::new(
        smtp.config(&["qa@example.com", "ops@example.com"]),
    ));
    let service = Service::new(parts);
    let mut req = request(vec![env("disk-1"), env("disk-2")]);
    req.request_id = Some("nightly-42".into());
    let resp = service.triage(req).unwrap();
    assert_eq!(
        resp.notification,
        Some(DeliveryStatus::Delivered { attempts: 1 })
    );
    let mail = smtp.messages();
    assert_eq!(mail.len(), 1, "one digest per request");
    assert_eq!(mail[0].from, "bugblitz@example.com");
    assert_eq!(mail[0].to, ["qa@example.com", "ops@example.com"]);
    assert!(mail[0].data.contains("disk-1"));
    assert!(mail[0].data.contains("disk-2"));
}

#[test]
fn unreachable_relay_is_a_warning() {
    let mut config = FakeSmtp::start().config(&["qa@example.com"]);
    config.relay_port = closed_port();
    let mut parts = mock_parts();
    parts.mailer = Some(Mailer::new(config));
    let service = Service::new(parts);
    let resp = service.triage(request(vec![env("disk")])).unwrap();
    assert!(matches!(
        resp.notification,
        Some(DeliveryStatus::Failed { attempts: 2, .. })
    ));
    assert_eq!(resp.status, ResponseStatus::Completed);
    assert_eq!(resp.warnings.len(), 1);
}

#[test]
fn unreachable_model_server_fails_whole_request() {
    let mut profiles = Profiles::defaults(&format!("http://127.0.0.1:{}/v1", closed_port()));
    for p in [
        &mut profiles.root_error_analysis,
        &mut profiles.bug_diagnosis,
        &mut profiles.bug_summarization,
        &mut profiles.duplicate_detection,
    ] {
        p.retries = 1;
        p.backoff_ms = 1;
        p.timeout_ms = 2_000;
    }
    let mut loaded = builtin();
    loaded.profiles = profiles;
    let service = Service::new(ServiceParts::new(
        loaded,
        Arc::new(Backend::Remote(RemoteBackend::new(None, 2))),
    ));
    match service.triage(request(vec![bug("a")])) {
        Err(ServiceError::Unavailable(e)) => assert!(e.is_unavailable()),
        other => panic!("expected unavailable, got {other:?}"),
    }
}

#[test]
fn request_id_is_assigned_when_absent() {
    let service = Service::new(mock_parts());
    let resp = service.triage(request(vec![env("x")])).unwrap();
    assert_eq!(resp.request_id.len(), 36);
}

#[test]
fn empty_log_is_notified() {
    let service = Service::new(mock_parts());
    let resp = service
        .triage(request(vec![TestFailure::new(
            "quiet",
            "all good\nnothing here\n",
        )]))
        .unwrap();
    assert_eq!(resp.outcomes[0].digest_size, 0);
    assert_eq!(resp.outcomes[0].action, Action::Notified);
}

#[test]
fn async_job_matches_sync_response() {
    let service = Arc::new(Service::new(mock_parts()));
    let body = serde_json::json!({
        "request_id": "parity",
        "failures": corpus_failures(),
        "options": { "dry_run": true },
    })
    .to_string();
    let sync = service.triage_body(body.as_bytes()).unwrap();

    let queued = service.submit(body.as_bytes()).unwrap();
    assert_eq!(queued.status, JobStatus::Queued);
    let deadline = Instant::now() + Duration::from_secs(30);
    let done = loop {
        let view = service.job(&queued.job_id).unwrap();
        if view.status == JobStatus::Done {
            break view;
        }
        assert!(Instant::now() < deadline, "job did not finish");
        std::thread::sleep(Duration::from_millis(10));
    };
    assert_eq!(done.response.unwrap(), sync);
}

#[test]
fn invalid_body_names_the_field() {
    let service = Service::new(mock_parts());
    let err = service
        .triage_body(br#"{"failures":[{"raw_log":"x"}]}"#)
        .unwrap_err();
    match err {
        ServiceError::Invalid(e) => {
            assert!(
                e.problems()
                    .iter()
                    .any(|p| p.path == "/failures/0/failure_id"),
                "{e}"
            );
        }
        other => panic!("unexpected {other}"),
    }
    assert!(matches!(
        service.triage_body(&[0xff, 0xfe]),
        Err(ServiceError::NotUtf8)
    ));
}

#[test]
fn from_config_uses_configured_registry() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(example_config())
        .unwrap()
        .replace(
            "assets/default_patterns.toml",
            &format!(
                "{}/assets/default_patterns.toml",
                env!("CARGO_MANIFEST_DIR")
            ),
        )
        .replace("registry_dir = \"registry\"", "registry_dir = \"reg\"");
    let path = dir.path().join("bugblitz.toml");
    std::fs::write(&path, text).unwrap();
    let config = bugblitz::config::Config::load(&path).unwrap();
    let service = Service::from_config(config, None).unwrap();
    assert_eq!(
        service.store().dir(),
        Some(dir.path().join("reg").as_path())
    );
    assert!(service.health().ready);
}
