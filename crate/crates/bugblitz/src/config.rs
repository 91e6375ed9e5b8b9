//! The service configuration file and the validation shared by
//! `check-config`, `serve` start-up and the health endpoint.

use std::fs;
use std::path::{Path, PathBuf};

use bugblitz_core::{MockBackend, MockRule, ModelProfile, PatternRegistry, Profiles, TemplateSet};
use serde::{Deserialize, Serialize};

use crate::patterns::{default_registry, load_pattern_registry};
use crate::store::RegistryStore;
use crate::templates::load_templates;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_MAX_BODY_BYTES: usize = 32 * 1024 * 1024;
pub const DEFAULT_JOB_TTL_SECS: u64 = 3600;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
pub const DEFAULT_ENDPOINT: &str = "http://127.0.0.1:8000/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServerConfig {
    pub bind: String,
    pub max_body_bytes: usize,
    pub job_ttl_secs: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: DEFAULT_BIND.into(),
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            job_ttl_secs: DEFAULT_JOB_TTL_SECS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Completions allowed in flight per endpoint.
    pub max_in_flight: usize,
    /// Whether the health check contacts each endpoint.
    pub probe: bool,
    /// Start the mock from the built-in rule table before `mock_rules`.
    pub mock_reference: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Remote,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            probe: false,
            mock_reference: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    pub base_url: String,
    pub project_key: String,
    #[serde(default = "default_issue_type")]
    pub issue_type: String,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Extra issue fields passed through unchanged.
    #[serde(default)]
    pub extra_fields: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MailConfig {
    pub relay_host: String,
    #[serde(default = "default_smtp_port")]
    pub relay_port: u16,
    #[serde(default)]
    pub starttls: bool,
    #[serde(default = "default_from")]
    pub from: String,
    #[serde(default)]
    pub recipients: Vec<String>,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_issue_type() -> String {
    "Bug".into()
}

fn default_retries() -> u32 {
    2
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_backoff_ms() -> u64 {
    200
}

fn default_smtp_port() -> u16 {
    25
}

fn default_from() -> String {
    "bugblitz@localhost".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub server: ServerConfig,
    pub patterns_path: PathBuf,
    pub registry_dir: PathBuf,
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub profiles: Vec<ModelProfile>,
    #[serde(default)]
    pub tracker: Option<TrackerConfig>,
    #[serde(default)]
    pub mail: Option<MailConfig>,
    #[serde(default)]
    pub mock_rules: Vec<MockRule>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {} is malformed at line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("configuration is not usable: {}", failed_checks(.0))]
    NotReady(Vec<Check>),
}

fn failed_checks(checks: &[Check]) -> String {
    checks
        .iter()
        .filter(|c| !c.ok)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Config {
    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|(line, message)| ConfigError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        })
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, (usize, String)> {
        let mut config: Config = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| crate::patterns::line_of(text, s.start))
                .unwrap_or(1);
            (line, e.message().to_string())
        })?;
        config.patterns_path = base.join(&config.patterns_path);
        config.registry_dir = base.join(&config.registry_dir);
        config.templates_dir = config.templates_dir.map(|d| base.join(d));
        Ok(config)
    }
}

/// One readiness check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

impl Check {
    fn pass(name: &str, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ok: true,
            detail: detail.into(),
        }
    }

    fn fail(name: &str, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ok: false,
            detail: detail.into(),
        }
    }
}

/// Everything the pipeline needs that comes from configuration files.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub patterns: PatternRegistry,
    pub templates: TemplateSet,
    pub profiles: Profiles,
}

/// Runs every check that does not need the network. The service starts only
/// when all of them pass, and `check-config` reports the same list.
pub fn check(config: &Config) -> (Vec<Check>, Option<Loaded>) {
    let mut checks = Vec::new();

    let patterns = match fs::read_to_string(&config.patterns_path) {
        Ok(text) => match load_pattern_registry(&text) {
            Ok(r) => {
                checks.push(Check::pass(
                    "patterns_path",
                    format!("{} pattern(s)", r.len()),
                ));
                Some(r)
            }
            Err(e) => {
                checks.push(Check::fail(
                    "patterns_path",
                    format!("{}: {e}", config.patterns_path.display()),
                ));
                None
            }
        },
        Err(e) => {
            checks.push(Check::fail(
                "patterns_path",
                format!("cannot read {}: {e}", config.patterns_path.display()),
            ));
            None
        }
    };

    let templates = match load_templates(config.templates_dir.as_deref()) {
        Ok(t) => {
            checks.push(Check::pass("templates_dir", "templates valid"));
            Some(t)
        }
        Err(e) => {
            checks.push(Check::fail("templates_dir", e.to_string()));
            None
        }
    };

    let profiles = match Profiles::from_list(config.profiles.clone()) {
        Ok(p) => {
            checks.push(Check::pass("profiles", "all four stages configured"));
            Some(p)
        }
        Err(e) => {
            checks.push(Check::fail("profiles", e.to_string()));
            None
        }
    };

    match RegistryStore::inspect(&config.registry_dir) {
        Ok(open) => checks.push(Check::pass(
            "registry_dir",
            format!("{open} open report(s)"),
        )),
        Err(e) => checks.push(Check::fail("registry_dir", e.to_string())),
    }

    if let Some(t) = &config.tracker {
        match reqwest::Url::parse(&t.base_url) {
            Ok(_) if !t.project_key.is_empty() => {
                checks.push(Check::pass("tracker", t.base_url.clone()))
            }
            Ok(_) => checks.push(Check::fail("tracker", "project_key is empty")),
            Err(e) => checks.push(Check::fail("tracker", format!("base_url: {e}"))),
        }
    }
    if let Some(m) = &config.mail {
        if m.recipients.is_empty() {
            checks.push(Check::fail("mail", "no recipients configured"));
        } else {
            checks.push(Check::pass(
                "mail",
                format!("{} recipient(s)", m.recipients.len()),
            ));
        }
    }
    if config.backend.max_in_flight == 0 {
        checks.push(Check::fail("backend", "max_in_flight must be at least 1"));
    }

    let loaded = match (patterns, templates, profiles) {
        (Some(patterns), Some(templates), Some(profiles)) if checks.iter().all(|c| c.ok) => {
            Some(Loaded {
                patterns,
                templates,
                profiles,
            })
        }
        _ => None,
    };
    (checks, loaded)
}

/// Like [`check`], but fails unless every check passed.
pub fn load_all(config: &Config) -> Result<Loaded, ConfigError> {
    match check(config) {
        (_, Some(loaded)) => Ok(loaded),
        (checks, None) => Err(ConfigError::NotReady(checks)),
    }
}

/// Built-in settings used when no config file is given: bundled patterns,
/// embedded templates and default profiles.
pub fn builtin() -> Loaded {
    Loaded {
        patterns: default_registry(),
        templates: TemplateSet::embedded(),
        profiles: Profiles::defaults(DEFAULT_ENDPOINT),
    }
}

/// The configured mock: reference rules (unless disabled) after the
/// config's own rules, so config rules win.
pub fn mock_backend(config: Option<&Config>) -> MockBackend {
    let Some(config) = config else {
        return MockBackend::reference();
    };
    let mut rules = config.mock_rules.clone();
    if config.backend.mock_reference {
        rules.extend(MockBackend::reference().rules().iter().cloned());
    }
    MockBackend::new(rules)
}
