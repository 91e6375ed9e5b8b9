//! Issue-tracker client: `POST {base}/rest/api/2/issue`.

use std::sync::OnceLock;
use std::time::Duration;

use bugblitz_core::{ActionError, BugSummary, TicketRef};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::TrackerConfig;

pub const TOKEN_ENV: &str = "BUGBLITZ_TRACKER_TOKEN";

#[derive(Deserialize)]
struct Created {
    key: String,
}

pub struct TrackerClient {
    config: TrackerConfig,
    token: Option<String>,
    client: OnceLock<reqwest::blocking::Client>,
}

impl TrackerClient {
    pub fn new(config: TrackerConfig, token: Option<String>) -> Self {
        Self {
            config,
            token,
            client: OnceLock::new(),
        }
    }

    pub fn from_env(config: TrackerConfig) -> Self {
        Self::new(
            config,
            std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
        )
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    fn base(&self) -> &str {
        self.config.base_url.trim_end_matches('/')
    }

    pub fn issue_body(&self, summary: &BugSummary) -> Value {
        let mut fields = self.config.extra_fields.clone();
        fields.insert("project".into(), json!({ "key": self.config.project_key }));
        fields.insert(
            "issuetype".into(),
            json!({ "name": self.config.issue_type }),
        );
        fields.insert("summary".into(), json!(summary.summary));
        fields.insert("description".into(), json!(summary.description));
        json!({ "fields": fields })
    }

    /// Creates one issue. Server errors and transport failures are retried
    /// up to the configured count; 401/403 and other 4xx answers are final.
    pub fn create_issue(&self, summary: &BugSummary) -> Result<TicketRef, ActionError> {
        let client = self.client.get_or_init(reqwest::blocking::Client::new);
        let url = format!("{}/rest/api/2/issue", self.base());
        let body = self.issue_body(summary);
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                let factor = 1u64 << (attempt - 2).min(16);
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms * factor));
            }
            let mut req = client
                .post(&url)
                .timeout(Duration::from_millis(self.config.timeout_ms))
                .json(&body);
            if let Some(token) = &self.token {
                req = req.bearer_auth(token);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let text = resp.text().unwrap_or_default();
            match status {
                200..=299 => {
                    let created: Created =
                        serde_json::from_str(&text).map_err(|e| ActionError::Rejected {
                            status,
                            message: format!("unreadable create response: {e}"),
                        })?;
                    return Ok(TicketRef {
                        url: format!("{}/browse/{}", self.base(), created.key),
                        tracker_key: created.key,
                        created_at: chrono::Utc::now()
                            .to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                    });
                }
                401 | 403 => return Err(ActionError::Auth(format!("status {status}"))),
                400..=499 => {
                    return Err(ActionError::Rejected {
                        status,
                        message: text.chars().take(300).collect(),
                    })
                }
                _ => last = format!("status {status}"),
            }
        }
        Err(ActionError::Exhausted {
            attempts,
            message: last,
        })
    }
}
