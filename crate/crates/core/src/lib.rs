//! Core of the bugblitz failed-test triage pipeline.
//!
//! Everything in this crate is pure computation over owned data: log
//! ingestion against an error-pattern registry, prompt rendering, the
//! four-stage analysis chain driven through the [`backend::ChatBackend`]
//! trait, action selection, the open-report event log, and the
//! recall/precision evaluation harness. Network transports, file formats and
//! the HTTP service live in the `bugblitz` crate.
//!
//! The crate builds without `std` (only `alloc` is required).

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod action;
pub mod backend;
pub mod evaluation;
pub mod ingestion;
pub mod mock;
pub mod pipeline;
pub mod prompts;
pub mod registry;
pub mod request;
pub mod template;
pub mod text;

pub use action::{
    ActionError, ActionKind, ActionSink, DeliveryStatus, Notification, NotificationDraft, NullSink,
    OpenReport, ReportStatus, TicketFiling, TicketRef,
};
pub use backend::{
    BackendError, ChatBackend, ChatMessage, CompletionResult, ModelProfile, Profiles, Role,
    Submodule,
};
pub use ingestion::{
    extract_errors, ErrorDigest, ErrorPattern, ErrorRecord, PatternError, PatternRegistry,
    PatternSpec, TestFailure, TestInfo,
};
pub use mock::{MockBackend, MockReply, MockRule};
pub use pipeline::{
    Action, BugSummary, DiagnosisVerdict, DuplicateCluster, RootCauseFinding, StageTimings,
    TriageOutcome,
};
pub use request::{assemble_request, RequestError, RequestOptions, TriageRequest};
pub use template::{PromptTemplate, TemplateError, TemplateSet};
