//! Command-line driver.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use bugblitz_core::evaluation::to_jsonl;
use bugblitz_core::pipeline::NoClock;
use bugblitz_core::{TestFailure, TriageRequest};
use clap::{Parser, Subcommand};

use crate::config::{self, BackendKind, Config};
use crate::dataset::{self, EXPORT_FILE};
use crate::llm::{Backend, RemoteBackend};
use crate::report::{self, Format};
use crate::service::{ResponseStatus, Service, ServiceParts, SystemClock};
use crate::store::RegistryStore;

#[derive(Debug, Parser)]
#[command(
    name = "bugblitz",
    version,
    about = "Triage failed test logs into bug tickets"
)]
pub struct Cli {
    /// Service configuration file. Without it, bundled patterns, embedded
    /// templates and default model profiles are used.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Triage every `*.log` file in a directory, one failure per file.
    Triage {
        dir: PathBuf,
        /// Produce full outcomes without filing tickets or sending mail.
        #[arg(long)]
        dry_run: bool,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Record wall-clock stage timings (makes reports differ run to run).
        #[arg(long)]
        timings: bool,
        /// Request id to report; defaults to the directory name.
        #[arg(long)]
        request_id: Option<String>,
    },
    /// Run a labeled dataset through the pipeline (dry run) and report
    /// recall, precision and root-error accuracy.
    Evaluate {
        dataset: PathBuf,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Write instruction/response records for model adaptation.
    ExportDataset {
        dataset: PathBuf,
        /// Output file; defaults to `finetune.jsonl` inside the dataset.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inspect or update the open-report registry.
    Registry {
        /// Registry directory; defaults to the config's `registry_dir`.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[command(subcommand)]
        action: RegistryAction,
    },
    /// Validate patterns, templates, profiles and store paths.
    CheckConfig {
        /// Config file; may also be given with --config.
        path: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        /// Listen address; defaults to the config's `server.bind`.
        #[arg(long)]
        bind: Option<String>,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RegistryAction {
    /// List reports (open ones unless --all).
    List {
        #[arg(long)]
        all: bool,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Mark a report resolved so it no longer suppresses new tickets.
    Resolve { key: String },
    /// Fold the event log into the snapshot.
    Compact,
}

type CmdResult = Result<i32, String>;

fn emit(out: Option<&Path>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(|e| e.to_string())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Option<Config>, String> {
    path.map(|p| Config::load(p).map_err(|e| e.to_string()))
        .transpose()
}

fn builtin_backend(kind: BackendKind) -> Arc<Backend> {
    match kind {
        BackendKind::Mock => Arc::new(Backend::Mock(config::mock_backend(None))),
        BackendKind::Remote => Arc::new(Backend::Remote(RemoteBackend::from_env(
            config::DEFAULT_MAX_IN_FLIGHT,
        ))),
    }
}

fn service(config: Option<Config>, backend: Option<BackendKind>) -> Result<Service, String> {
    match config {
        Some(c) => Service::from_config(c, backend).map_err(|e| e.to_string()),
        None => Ok(Service::new(ServiceParts::new(
            config::builtin(),
            builtin_backend(backend.unwrap_or(BackendKind::Mock)),
        ))),
    }
}

/// One failure per `*.log` file, in file-name order.
pub fn read_log_dir(dir: &Path) -> Result<Vec<TestFailure>, String> {
    let entries = fs::read_dir(dir).map_err(|e| format!("cannot read {}: {e}", dir.display()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "log"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let bytes = fs::read(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            Ok(TestFailure::from_log_bytes(stem, &bytes).with_test_name(stem))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn triage(
    config: Option<Config>,
    dir: &Path,
    dry_run: bool,
    backend: Option<BackendKind>,
    out: Option<&Path>,
    format: Format,
    timings: bool,
    request_id: Option<String>,
) -> CmdResult {
    let failures = read_log_dir(dir)?;
    let mut svc = service(config, backend)?;
    svc = if timings {
        svc.with_clock(Arc::new(SystemClock::new()))
    } else {
        svc.with_clock(Arc::new(NoClock))
    };
    let mut request = TriageRequest::new(failures);
    request.options.dry_run = dry_run;
    request.request_id = Some(request_id.unwrap_or_else(|| {
        dir.file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("triage")
            .to_string()
    }));
    let response = svc.triage(request).map_err(|e| e.to_string())?;
    emit(out, &report::render_triage(&response, format))?;
    Ok(match response.status {
        ResponseStatus::Completed => 0,
        ResponseStatus::Partial => 2,
        ResponseStatus::Failed => 1,
    })
}

fn evaluate(
    config: Option<Config>,
    dir: &Path,
    backend: Option<BackendKind>,
    out: Option<&Path>,
    format: Format,
) -> CmdResult {
    let ds = dataset::load_dataset(dir).map_err(|e| e.to_string())?;
    for w in &ds.warnings {
        eprintln!("warning: {w}");
    }
    let (loaded, backend) = match &config {
        Some(c) => (
            config::load_all(c).map_err(|e| e.to_string())?,
            match backend.unwrap_or(c.backend.kind) {
                BackendKind::Mock => Arc::new(Backend::Mock(config::mock_backend(Some(c)))),
                BackendKind::Remote => Arc::new(Backend::Remote(RemoteBackend::from_env(
                    c.backend.max_in_flight,
                ))),
            },
        ),
        None => (
            config::builtin(),
            builtin_backend(backend.unwrap_or(BackendKind::Mock)),
        ),
    };
    let (metrics, _) =
        dataset::run_evaluation(&ds.samples, &loaded, &*backend).map_err(|e| e.to_string())?;
    emit(out, &report::render_metrics(&metrics, format))?;
    Ok(0)
}

fn export(config: Option<Config>, dir: &Path, out: Option<&Path>) -> CmdResult {
    let ds = dataset::load_dataset(dir).map_err(|e| e.to_string())?;
    let loaded = match &config {
        Some(c) => config::load_all(c).map_err(|e| e.to_string())?,
        None => config::builtin(),
    };
    let result = dataset::export_dataset(&ds.samples, &loaded).map_err(|e| e.to_string())?;
    let default_out = dir.join(EXPORT_FILE);
    let path = out.unwrap_or(&default_out);
    fs::write(path, to_jsonl(&result.records))
        .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    eprint!("{}", report::render_cleansing(&result.report));
    eprintln!(
        "{} record(s) written to {}",
        result.records.len(),
        path.display()
    );
    Ok(0)
}

fn registry(config: Option<Config>, dir: Option<PathBuf>, action: RegistryAction) -> CmdResult {
    let dir = match (dir, config) {
        (Some(d), _) => d,
        (None, Some(c)) => c.registry_dir,
        (None, None) => return Err("registry: give --dir or --config".into()),
    };
    let mut store = RegistryStore::open(&dir).map_err(|e| e.to_string())?;
    match action {
        RegistryAction::List { all, format } => {
            let reports: Vec<_> = if all {
                store.reports().to_vec()
            } else {
                store.open_reports()
            };
            let text = match format {
                Format::Json => report::to_json(&reports),
                Format::Table => reports
                    .iter()
                    .map(|r| {
                        let status = if r.is_open() { "open" } else { "resolved" };
                        format!("{:<16} {:<9} {}\n", r.ticket.tracker_key, status, r.summary)
                    })
                    .collect(),
            };
            emit(None, &text)?;
        }
        RegistryAction::Resolve { key } => {
            let ticket = store.mark_resolved(&key).map_err(|e| e.to_string())?;
            println!("resolved {}", ticket.tracker_key);
        }
        RegistryAction::Compact => {
            store.compact().map_err(|e| e.to_string())?;
            println!("compacted {} report(s)", store.reports().len());
        }
    }
    Ok(0)
}

fn check_config(path: &Path) -> CmdResult {
    let config = Config::load(path).map_err(|e| e.to_string())?;
    let (checks, loaded) = config::check(&config);
    for c in &checks {
        println!(
            "{:<4} {:<14} {}",
            if c.ok { "ok" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(if loaded.is_some() { 0 } else { 1 })
}

fn serve(config: Option<Config>, bind: Option<String>, backend: Option<BackendKind>) -> CmdResult {
    let config = config.ok_or("serve needs --config")?;
    let bind = bind.unwrap_or_else(|| config.server.bind.clone());
    let max_body = config.server.max_body_bytes;
    let svc = Arc::new(Service::from_config(config, backend).map_err(|e| e.to_string())?);
    let token = std::env::var(crate::http::API_TOKEN_ENV).ok();
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .map_err(|e| format!("cannot listen on {bind}: {e}"))?;
        eprintln!("listening on {bind}");
        crate::http::serve(listener, svc, token, max_body)
            .await
            .map_err(|e| e.to_string())
    })?;
    Ok(0)
}

/// Runs a parsed invocation and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = (|| -> CmdResult {
        match cli.command {
            Command::CheckConfig { path } => {
                let path = path
                    .or(cli.config)
                    .ok_or("check-config needs a config path")?;
                check_config(&path)
            }
            command => {
                let config = load_config(cli.config.as_deref())?;
                match command {
                    Command::Triage {
                        dir,
                        dry_run,
                        backend,
                        out,
                        format,
                        timings,
                        request_id,
                    } => triage(
                        config,
                        &dir,
                        dry_run,
                        backend,
                        out.as_deref(),
                        format,
                        timings,
                        request_id,
                    ),
                    Command::Evaluate {
                        dataset,
                        backend,
                        out,
                        format,
                    } => evaluate(config, &dataset, backend, out.as_deref(), format),
                    Command::ExportDataset { dataset, out } => {
                        export(config, &dataset, out.as_deref())
                    }
                    Command::Registry { dir, action } => registry(config, dir, action),
                    Command::Serve { bind, backend } => serve(config, bind, backend),
                    Command::CheckConfig { .. } => unreachable!("handled above"),
                }
            }
        }
    })();
    match result {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            1
        }
    }
}

/// Parses `args` (program name first) and runs them.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}
