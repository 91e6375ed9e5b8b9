//! The embeddable service: validates requests, fans per-failure analysis
//! out over threads, then runs dedup and actions with the registry held.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use bugblitz_core::pipeline::PipelineError;
use bugblitz_core::pipeline::{analyze_failure, finish_request, Clock, NoClock, Pipeline};
use bugblitz_core::request::FieldProblem;
use bugblitz_core::{
    assemble_request, BackendError, ChatBackend, DeliveryStatus, DuplicateCluster, RequestError,
    TriageOutcome, TriageRequest,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{self, BackendKind, Check, Config, ConfigError, Loaded};
use crate::llm::{probe, Backend, RemoteBackend};
use crate::mail::Mailer;
use crate::sink::LiveSink;
use crate::store::{RegistryStore, StoreError};
use crate::tracker::TrackerClient;

/// Microseconds since the service started.
#[derive(Debug, Clone, Copy)]
pub struct SystemClock(Instant);

impl SystemClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_us(&self) -> u64 {
        self.0.elapsed().as_micros() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseStatus {
    Completed,
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageResponse {
    pub request_id: String,
    pub status: ResponseStatus,
    pub outcomes: Vec<TriageOutcome>,
    pub clusters: Vec<DuplicateCluster>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notification: Option<DeliveryStatus>,
}

impl TriageResponse {
    pub fn status_for(outcomes: &[TriageOutcome]) -> ResponseStatus {
        let errored = outcomes.iter().filter(|o| o.is_errored()).count();
        match errored {
            0 => ResponseStatus::Completed,
            n if n == outcomes.len() => ResponseStatus::Failed,
            _ => ResponseStatus::Partial,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Invalid(#[from] RequestError),
    #[error("{0}")]
    Unavailable(BackendError),
    #[error("request body is not UTF-8")]
    NotUtf8,
}

impl From<PipelineError> for ServiceError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::BackendUnavailable(b) => ServiceError::Unavailable(b),
        }
    }
}

/// Machine-readable error document.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub problems: Vec<FieldProblem>,
    pub retryable: bool,
}

impl From<&ServiceError> for ErrorBody {
    fn from(e: &ServiceError) -> Self {
        let problems = match e {
            ServiceError::Invalid(r) => r.problems().to_vec(),
            _ => Vec::new(),
        };
        Self {
            error: e.to_string(),
            problems,
            retryable: matches!(e, ServiceError::Unavailable(_)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct JobView {
    pub job_id: String,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<TriageResponse>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

struct Job {
    view: JobView,
    touched: Instant,
}

/// In-memory job table; entries expire `ttl` after their last update.
pub struct JobStore {
    ttl: Duration,
    jobs: Mutex<HashMap<String, Job>>,
}

impl JobStore {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            jobs: Mutex::new(HashMap::new()),
        }
    }

    fn lock(&self) -> MutexGuard<'_, HashMap<String, Job>> {
        let mut jobs = self.jobs.lock().unwrap();
        let ttl = self.ttl;
        jobs.retain(|_, j| j.touched.elapsed() < ttl);
        jobs
    }

    fn put(&self, view: JobView) {
        self.lock().insert(
            view.job_id.clone(),
            Job {
                view,
                touched: Instant::now(),
            },
        );
    }

    pub fn get(&self, id: &str) -> Option<JobView> {
        self.lock().get(id).map(|j| j.view.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Health {
    pub ready: bool,
    pub checks: Vec<Check>,
    /// "skipped", "ok" or the first probe failure.
    pub probe: String,
}

pub type SharedBackend = Arc<dyn ChatBackend + Send + Sync>;

/// Everything a service is built from.
pub struct ServiceParts {
    pub loaded: Loaded,
    pub backend: SharedBackend,
    pub store: RegistryStore,
    pub tracker: Option<TrackerClient>,
    pub mailer: Option<Mailer>,
    pub clock: Arc<dyn Clock + Send + Sync>,
    pub job_ttl: Duration,
    pub config: Option<Config>,
}

impl ServiceParts {
    /// Defaults around a loaded configuration: in-memory registry, no
    /// tracker or mail, zero clock.
    pub fn new(loaded: Loaded, backend: SharedBackend) -> Self {
        Self {
            loaded,
            backend,
            store: RegistryStore::in_memory(Vec::new()),
            tracker: None,
            mailer: None,
            clock: Arc::new(NoClock),
            job_ttl: Duration::from_secs(config::DEFAULT_JOB_TTL_SECS),
            config: None,
        }
    }
}

pub struct Service {
    loaded: Loaded,
    backend: SharedBackend,
    store: Mutex<RegistryStore>,
    tracker: Option<TrackerClient>,
    mailer: Option<Mailer>,
    clock: Arc<dyn Clock + Send + Sync>,
    jobs: JobStore,
    config: Option<Config>,
}

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl Service {
    pub fn new(parts: ServiceParts) -> Self {
        Self {
            loaded: parts.loaded,
            backend: parts.backend,
            store: Mutex::new(parts.store),
            tracker: parts.tracker,
            mailer: parts.mailer,
            clock: parts.clock,
            jobs: JobStore::new(parts.job_ttl),
            config: parts.config,
        }
    }

    /// Builds the service described by a config file, failing on any
    /// readiness check. `backend` overrides the configured backend kind.
    pub fn from_config(config: Config, backend: Option<BackendKind>) -> Result<Self, StartError> {
        let loaded = config::load_all(&config)?;
        let store = RegistryStore::open(&config.registry_dir)?;
        let backend: SharedBackend = match backend.unwrap_or(config.backend.kind) {
            BackendKind::Mock => Arc::new(Backend::Mock(config::mock_backend(Some(&config)))),
            BackendKind::Remote => Arc::new(Backend::Remote(RemoteBackend::from_env(
                config.backend.max_in_flight,
            ))),
        };
        Ok(Self::new(ServiceParts {
            loaded,
            backend,
            store,
            tracker: config.tracker.clone().map(TrackerClient::from_env),
            mailer: config.mail.clone().map(Mailer::new),
            clock: Arc::new(SystemClock::new()),
            job_ttl: Duration::from_secs(config.server.job_ttl_secs),
            config: Some(config),
        }))
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock + Send + Sync>) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> Option<&Config> {
        self.config.as_ref()
    }

    pub fn store(&self) -> MutexGuard<'_, RegistryStore> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn pipeline(&self) -> Pipeline<'_, dyn ChatBackend + Send + Sync> {
        Pipeline {
            patterns: &self.loaded.patterns,
            backend: &*self.backend,
            profiles: &self.loaded.profiles,
            templates: &self.loaded.templates,
            clock: &*self.clock,
        }
    }

    /// Runs one request to completion.
    pub fn triage(&self, mut request: TriageRequest) -> Result<TriageResponse, ServiceError> {
        let request_id = request
            .request_id
            .get_or_insert_with(|| uuid::Uuid::new_v4().to_string())
            .clone();
        let p = self.pipeline();
        let analyses = request
            .failures
            .par_iter()
            .map(|f| analyze_failure(p, f))
            .collect::<Result<Vec<_>, _>>()?;

        let mut store = self.store();
        let mut sink = LiveSink {
            store: &mut store,
            tracker: self.tracker.as_ref(),
            mailer: self.mailer.as_ref(),
        };
        let report = finish_request(p, Some(&request_id), request.options, analyses, &mut sink);
        drop(store);

        Ok(TriageResponse {
            request_id,
            status: TriageResponse::status_for(&report.outcomes),
            outcomes: report.outcomes,
            clusters: report.clusters,
            warnings: report.warnings,
            notification: report.notification,
        })
    }

    pub fn triage_body(&self, body: &[u8]) -> Result<TriageResponse, ServiceError> {
        let text = std::str::from_utf8(body).map_err(|_| ServiceError::NotUtf8)?;
        self.triage(assemble_request(text)?)
    }

    /// Validates now, runs on a background thread, returns the queued job.
    pub fn submit(self: &Arc<Self>, body: &[u8]) -> Result<JobView, ServiceError> {
        let text = std::str::from_utf8(body).map_err(|_| ServiceError::NotUtf8)?;
        let mut request = assemble_request(text)?;
        request
            .request_id
            .get_or_insert_with(|| uuid::Uuid::new_v4().to_string());
        let job_id = uuid::Uuid::new_v4().to_string();
        let view = |status, response, error| JobView {
            job_id: job_id.clone(),
            status,
            response,
            error,
        };
        let queued = view(JobStatus::Queued, None, None);
        self.jobs.put(queued.clone());

        let service = Arc::clone(self);
        let id = job_id.clone();
        std::thread::spawn(move || {
            let view = |status, response, error| JobView {
                job_id: id.clone(),
                status,
                response,
                error,
            };
            service.jobs.put(view(JobStatus::Running, None, None));
            let done = match service.triage(request) {
                Ok(r) => view(JobStatus::Done, Some(r), None),
                Err(e) => view(JobStatus::Failed, None, Some(ErrorBody::from(&e))),
            };
            service.jobs.put(done);
        });
        Ok(queued)
    }

    pub fn job(&self, id: &str) -> Option<JobView> {
        self.jobs.get(id)
    }

    /// Readiness: the shared config checks (re-reading files from disk) and,
    /// when enabled, a one-token probe of every profile's endpoint.
    pub fn health(&self) -> Health {
        let Some(config) = &self.config else {
            return Health {
                ready: true,
                checks: Vec::new(),
                probe: "skipped".into(),
            };
        };
        let (checks, loaded) = config::check(config);
        let mut probe_status = "skipped".to_string();
        if config.backend.probe {
            probe_status = "ok".into();
            for profile in self.loaded.profiles.iter() {
                if let Err(e) = probe(&*self.backend, profile) {
                    probe_status = format!("{}: {e}", profile.submodule);
                    break;
                }
            }
        }
        Health {
            ready: loaded.is_some() && (probe_status == "ok" || probe_status == "skipped"),
            checks,
            probe: probe_status,
        }
    }
}
