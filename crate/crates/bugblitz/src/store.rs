//! Durable open-report registry: `open_reports.json` holds a snapshot and
//! `registry.log` the events appended since.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use bugblitz_core::registry::{encode_event, replay, RegistryError, RegistryEvent, ReportSet};
use bugblitz_core::{OpenReport, TicketRef};

pub const SNAPSHOT_FILE: &str = "open_reports.json";
pub const LOG_FILE: &str = "registry.log";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("registry store {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(
        "registry store {0} is corrupt ({detail}). To recover, move the directory aside \
         (for example `mv {0} {0}.corrupt`) and restart; an empty registry will be created",
        dir.display()
    )]
    Corrupt { dir: PathBuf, detail: String },
    #[error("no report with key `{0}`")]
    NotFound(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

struct Disk {
    dir: PathBuf,
    log: File,
}

/// The registry plus, unless in-memory, the files backing it. Mutations
/// go through `&mut self`; share it behind a mutex.
pub struct RegistryStore {
    set: ReportSet,
    disk: Option<Disk>,
}

struct Loaded {
    set: ReportSet,
    log_len: u64,
    valid_len: u64,
}

fn load(dir: &Path) -> Result<Loaded, StoreError> {
    let corrupt = |detail: String| StoreError::Corrupt {
        dir: dir.to_path_buf(),
        detail,
    };
    let snapshot_path = dir.join(SNAPSHOT_FILE);
    let snapshot: Vec<OpenReport> = match fs::read(&snapshot_path) {
        Ok(bytes) => {
            serde_json::from_slice(&bytes).map_err(|e| corrupt(format!("{SNAPSHOT_FILE}: {e}")))?
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(io(&snapshot_path)(e)),
    };
    let log_path = dir.join(LOG_FILE);
    let log = match fs::read(&log_path) {
        Ok(bytes) => bytes,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(io(&log_path)(e)),
    };
    let r = replay(snapshot, &log).map_err(|e| match e {
        RegistryError::CorruptLog { line, message } => {
            corrupt(format!("{LOG_FILE} line {line}: {message}"))
        }
        other => corrupt(other.to_string()),
    })?;
    Ok(Loaded {
        set: r.set,
        log_len: log.len() as u64,
        valid_len: r.valid_len as u64,
    })
}

impl RegistryStore {
    /// A registry that lives only as long as the process.
    pub fn in_memory(reports: Vec<OpenReport>) -> Self {
        Self {
            set: ReportSet::new(reports),
            disk: None,
        }
    }

    /// Opens (creating if needed) the store in `dir`. A torn final log line
    /// left by a crash is cut off.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        let loaded = load(dir)?;
        let log_path = dir.join(LOG_FILE);
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(io(&log_path))?;
        if loaded.valid_len < loaded.log_len {
            log.set_len(loaded.valid_len).map_err(io(&log_path))?;
        }
        Ok(Self {
            set: loaded.set,
            disk: Some(Disk {
                dir: dir.to_path_buf(),
                log,
            }),
        })
    }

    /// Number of open reports in `dir`, without creating or repairing
    /// anything. A missing directory counts as empty when its parent exists.
    pub fn inspect(dir: &Path) -> Result<usize, StoreError> {
        if !dir.exists() {
            let parent = dir.parent().filter(|p| !p.as_os_str().is_empty());
            return match parent {
                Some(p) if !p.is_dir() => Err(io(dir)(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "parent directory does not exist",
                ))),
                _ => Ok(0),
            };
        }
        if !dir.is_dir() {
            return Err(io(dir)(std::io::Error::other("not a directory")));
        }
        Ok(load(dir)?.set.open_count())
    }

    pub fn dir(&self) -> Option<&Path> {
        self.disk.as_ref().map(|d| d.dir.as_path())
    }

    pub fn reports(&self) -> &[OpenReport] {
        self.set.all()
    }

    pub fn open_reports(&self) -> Vec<OpenReport> {
        self.set.open().cloned().collect()
    }

    /// Validates, persists, then applies one event.
    pub fn append(&mut self, event: RegistryEvent) -> Result<(), StoreError> {
        self.set.check(&event).map_err(|e| match e {
            RegistryError::NotFound(key) => StoreError::NotFound(key),
            other => StoreError::Corrupt {
                dir: self.dir().map(Path::to_path_buf).unwrap_or_default(),
                detail: other.to_string(),
            },
        })?;
        if let Some(disk) = &mut self.disk {
            let path = disk.dir.join(LOG_FILE);
            disk.log
                .write_all(encode_event(&event).as_bytes())
                .and_then(|()| disk.log.sync_data())
                .map_err(io(&path))?;
        }
        self.set.apply(event).expect("checked above");
        Ok(())
    }

    pub fn record_opened(&mut self, report: OpenReport) -> Result<(), StoreError> {
        self.append(RegistryEvent::Opened { report })
    }

    pub fn mark_resolved(&mut self, tracker_key: &str) -> Result<TicketRef, StoreError> {
        self.append(RegistryEvent::Resolved {
            tracker_key: tracker_key.into(),
        })?;
        Ok(self
            .set
            .get(tracker_key)
            .expect("just resolved")
            .ticket
            .clone())
    }

    /// Folds the log into a fresh snapshot and empties the log.
    pub fn compact(&mut self) -> Result<(), StoreError> {
        let Some(disk) = &mut self.disk else {
            return Ok(());
        };
        let snapshot = disk.dir.join(SNAPSHOT_FILE);
        let tmp = disk.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let body = serde_json::to_vec_pretty(self.set.all()).expect("reports serialize");
        let mut f = File::create(&tmp).map_err(io(&tmp))?;
        f.write_all(&body)
            .and_then(|()| f.sync_all())
            .map_err(io(&tmp))?;
        fs::rename(&tmp, &snapshot).map_err(io(&snapshot))?;
        // replaying the old log over the new snapshot is harmless, so a
        // crash before this truncation loses nothing
        disk.log.set_len(0).map_err(io(&disk.dir.join(LOG_FILE)))?;
        Ok(())
    }
}
