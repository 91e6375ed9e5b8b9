//! Test-failure triage: the service, its HTTP API, the CLI and the file
//! formats around [`bugblitz_core`].

pub mod cli;
pub mod config;
pub mod dataset;
pub mod http;
pub mod llm;
pub mod mail;
pub mod patterns;
pub mod report;
pub mod service;
pub mod sink;
pub mod store;
pub mod templates;
pub mod tracker;

pub use bugblitz_core as core;
pub use service::{Service, ServiceParts, TriageResponse};
