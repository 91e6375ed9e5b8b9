//! Labeled datasets on disk: `labels.json` plus `logs/<sample_id>.log`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use bugblitz_core::evaluation::{
    evaluate, export_finetune_dataset, parse_labels, EvaluationSample, ExportResult, LabelError,
    MetricsReport,
};
use bugblitz_core::pipeline::{run_pipeline, NoClock, Pipeline, PipelineError};
use bugblitz_core::{
    extract_errors, ChatBackend, NullSink, RequestOptions, TemplateError, TestFailure,
    TriageOutcome, TriageRequest,
};

use crate::config::Loaded;

pub const LABELS_FILE: &str = "labels.json";
pub const LOGS_DIR: &str = "logs";
pub const EXPORT_FILE: &str = "finetune.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Labels { path: PathBuf, source: LabelError },
    #[error("sample `{sample_id}` has no log file (expected {})", path.display())]
    MissingLog { sample_id: String, path: PathBuf },
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<EvaluationSample>,
    pub warnings: Vec<String>,
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let labels_path = dir.join(LABELS_FILE);
    let text = fs::read_to_string(&labels_path).map_err(|source| DatasetError::Io {
        path: labels_path.clone(),
        source,
    })?;
    let labels = parse_labels(&text).map_err(|source| DatasetError::Labels {
        path: labels_path,
        source,
    })?;

    let logs = dir.join(LOGS_DIR);
    let mut samples = Vec::with_capacity(labels.len());
    let mut labeled = BTreeSet::new();
    for (id, label) in labels {
        let path = logs.join(format!("{id}.log"));
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(DatasetError::MissingLog {
                    sample_id: id,
                    path,
                })
            }
            Err(source) => return Err(DatasetError::Io { path, source }),
        };
        let raw_log = String::from_utf8_lossy(&bytes).into_owned();
        samples.push(EvaluationSample::from_label(&id, label, raw_log));
        labeled.insert(id);
    }

    let mut warnings = Vec::new();
    if let Ok(entries) = fs::read_dir(&logs) {
        let mut extra: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let p = e.path();
                let stem = p.file_stem()?.to_str()?.to_string();
                (p.extension()? == "log" && !labeled.contains(&stem)).then_some(stem)
            })
            .collect();
        extra.sort();
        for stem in extra {
            warnings.push(format!("log `{stem}.log` has no label and is ignored"));
        }
    }
    Ok(Dataset { samples, warnings })
}

fn failures(samples: &[EvaluationSample]) -> Vec<TestFailure> {
    samples
        .iter()
        .map(|s| TestFailure::new(s.sample_id.as_str(), s.raw_log.as_str()))
        .collect()
}

/// Triage every sample as a dry run, without registry dedup, and score it.
pub fn run_evaluation<B: ChatBackend + Sync + ?Sized>(
    samples: &[EvaluationSample],
    loaded: &Loaded,
    backend: &B,
) -> Result<(MetricsReport, Vec<TriageOutcome>), PipelineError> {
    let request = TriageRequest {
        request_id: Some("evaluation".into()),
        failures: failures(samples),
        options: RequestOptions {
            dry_run: true,
            dedup_against_registry: false,
        },
    };
    let p = Pipeline {
        patterns: &loaded.patterns,
        backend,
        profiles: &loaded.profiles,
        templates: &loaded.templates,
        clock: &NoClock,
    };
    let report = run_pipeline(p, &request, &mut NullSink)?;
    Ok((evaluate(&report.outcomes, samples), report.outcomes))
}

pub fn export_dataset(
    samples: &[EvaluationSample],
    loaded: &Loaded,
) -> Result<ExportResult, TemplateError> {
    let digests: Vec<_> = failures(samples)
        .iter()
        .map(|f| extract_errors(f, &loaded.patterns))
        .collect();
    export_finetune_dataset(samples, &digests, &loaded.templates)
}
