//! In-process fakes for the tracker, the chat-completion server and the
//! SMTP relay, plus fixture helpers shared by the integration tests.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use bugblitz::config::{Loaded, MailConfig, TrackerConfig};
use bugblitz_core::{TestFailure, TriageRequest};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn corpus_dir() -> PathBuf {
    fixtures().join("corpus")
}

pub fn corpus_logs() -> PathBuf {
    corpus_dir().join("logs")
}

pub fn example_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("bugblitz.example.toml")
}

pub fn builtin() -> Loaded {
    bugblitz::config::builtin()
}

pub fn corpus_failures() -> Vec<TestFailure> {
    bugblitz::cli::read_log_dir(&corpus_logs()).unwrap()
}

pub fn request(failures: Vec<TestFailure>) -> TriageRequest {
    TriageRequest::new(failures)
}

/// One HTTP request as the fake server saw it.
#[derive(Debug, Clone)]
pub struct Recorded {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Recorded {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap()
    }
}

type Handler = dyn Fn(&Recorded, usize) -> (u16, String) + Send + Sync;

/// A tiny HTTP/1.1 server. The handler gets each request and its 0-based
/// arrival number and returns status and JSON body.
pub struct FakeHttp {
    addr: SocketAddr,
    requests: Arc<Mutex<Vec<Recorded>>>,
}

fn read_request(stream: &mut BufReader<TcpStream>) -> Option<Recorded> {
    let mut line = String::new();
    if stream.read_line(&mut line).ok()? == 0 {
        return None;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut headers = Vec::new();
    let mut length = 0usize;
    loop {
        let mut h = String::new();
        stream.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.eq_ignore_ascii_case("content-length") {
                length = v.parse().unwrap_or(0);
            }
            headers.push((k, v));
        }
    }
    let mut body = vec![0; length];
    stream.read_exact(&mut body).ok()?;
    Some(Recorded {
        method,
        path,
        headers,
        body: String::from_utf8_lossy(&body).into_owned(),
    })
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        201 => "Created",
        400 => "Bad Request",
        401 => "Unauthorized",
        403 => "Forbidden",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

impl FakeHttp {
    pub fn start(
        handler: impl Fn(&Recorded, usize) -> (u16, String) + Send + Sync + 'static,
    ) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let seen = Arc::clone(&requests);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let handler = Arc::clone(&handler);
                let seen = Arc::clone(&seen);
                thread::spawn(move || {
                    let mut writer = stream.try_clone().unwrap();
                    let mut reader = BufReader::new(stream);
                    if let Some(req) = read_request(&mut reader) {
                        let n = {
                            let mut all = seen.lock().unwrap();
                            all.push(req.clone());
                            all.len() - 1
                        };
                        let (status, body) = handler(&req, n);
                        let resp = format!(
                            "HTTP/1.1 {status} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                            reason(status),
                            body.len()
                        );
                        let _ = writer.write_all(resp.as_bytes());
                        let _ = writer.flush();
                    }
                });
            }
        });
        Self { addr, requests }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }

    pub fn count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

/// Tracker that creates `PROJ-1`, `PROJ-2`, ... for every request.
pub fn fake_tracker() -> FakeHttp {
    let next = AtomicUsize::new(0);
    FakeHttp::start(move |req, _| {
        if req.method == "POST" && req.path == "/rest/api/2/issue" {
            let n = next.fetch_add(1, Ordering::SeqCst) + 1;
            (201, format!(r#"{{"id":"{}","key":"PROJ-{n}"}}"#, 10000 + n))
        } else {
            (404, r#"{"errorMessages":["not found"]}"#.into())
        }
    })
}

/// Tracker answering every request with one status.
pub fn failing_tracker(status: u16) -> FakeHttp {
    FakeHttp::start(move |_, _| (status, r#"{"errorMessages":["nope"]}"#.into()))
}

pub fn tracker_config(fake: &FakeHttp) -> TrackerConfig {
    TrackerConfig {
        base_url: fake.url(),
        project_key: "PROJ".into(),
        issue_type: "Bug".into(),
        retries: 2,
        timeout_ms: 5_000,
        backoff_ms: 1,
        extra_fields: serde_json::Map::new(),
    }
}

/// Chat-completion body in the OpenAI wire shape.
pub fn completion(text: &str, finish_reason: &str) -> String {
    serde_json::json!({
        "id": "cmpl-1",
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": text },
            "finish_reason": finish_reason,
        }],
    })
    .to_string()
}

/// One message delivered to the fake relay.
#[derive(Debug, Clone)]
pub struct Delivered {
    pub from: String,
    pub to: Vec<String>,
    pub data: String,
}

/// Minimal SMTP relay accepting every message.
pub struct FakeSmtp {
    pub port: u16,
    messages: Arc<Mutex<Vec<Delivered>>>,
}

fn smtp_session(stream: TcpStream, messages: &Mutex<Vec<Delivered>>) -> std::io::Result<()> {
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    writer.write_all(b"220 fake.relay ESMTP\r\n")?;
    let mut from = String::new();
    let mut to = Vec::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let cmd = line.trim_end().to_string();
        let upper = cmd.to_ascii_uppercase();
        if upper.starts_with("EHLO") || upper.starts_with("HELO") {
            writer.write_all(b"250-fake.relay\r\n250 8BITMIME\r\n")?;
        } else if upper.starts_with("MAIL FROM:") {
            from = cmd[10..].trim().trim_matches(['<', '>']).to_string();
            to.clear();
            writer.write_all(b"250 OK\r\n")?;
        } else if upper.starts_with("RCPT TO:") {
            to.push(cmd[8..].trim().trim_matches(['<', '>']).to_string());
            writer.write_all(b"250 OK\r\n")?;
        } else if upper == "DATA" {
            writer.write_all(b"354 go ahead\r\n")?;
            let mut data = String::new();
            loop {
                let mut l = String::new();
                if reader.read_line(&mut l)? == 0 {
                    return Ok(());
                }
                if l == ".\r\n" || l == ".\n" {
                    break;
                }
                data.push_str(&l);
            }
            messages.lock().unwrap().push(Delivered {
                from: from.clone(),
                to: to.clone(),
                data,
            });
            writer.write_all(b"250 queued\r\n")?;
        } else if upper == "QUIT" {
            writer.write_all(b"221 bye\r\n")?;
            return Ok(());
        } else {
            writer.write_all(b"250 OK\r\n")?;
        }
    }
}

impl FakeSmtp {
    pub fn start() -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let messages = Arc::new(Mutex::new(Vec::new()));
        let sink = Arc::clone(&messages);
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let sink = Arc::clone(&sink);
                thread::spawn(move || {
                    let _ = smtp_session(stream, &sink);
                });
            }
        });
        Self { port, messages }
    }

    pub fn messages(&self) -> Vec<Delivered> {
        self.messages.lock().unwrap().clone()
    }

    pub fn config(&self, recipients: &[&str]) -> MailConfig {
        MailConfig {
            relay_host: "127.0.0.1".into(),
            relay_port: self.port,
            starttls: false,
            from: "bugblitz@example.com".into(),
            recipients: recipients.iter().map(|r| r.to_string()).collect(),
            retries: 1,
            timeout_ms: 5_000,
            backoff_ms: 1,
        }
    }
}

/// A port with nothing listening on it.
pub fn closed_port() -> u16 {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().port()
}
