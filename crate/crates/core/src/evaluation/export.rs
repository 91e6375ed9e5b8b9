use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::EvaluationSample;
use crate::backend::{ChatMessage, Role};
use crate::ingestion::{ErrorDigest, ErrorRecord};
use crate::template::{TemplateError, TemplateSet};
use crate::text::{salient_tokens, strip_non_printable};

pub const RULE_LABEL_LOG_MISMATCH: &str = "label-log-mismatch";
pub const RULE_DUPLICATE: &str = "duplicate";
pub const RULE_INVALID_ROOT_INDEX: &str = "invalid-root-index";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneTask {
    RootAnalysis,
    Diagnosis,
    Summarization,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub sample_id: String,
    pub task: FinetuneTask,
    pub instruction: String,
    pub response: String,
}

/// Samples dropped per rule, plus samples whose text lost control
/// characters (cleaned, not dropped).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleansingReport {
    pub samples_in: usize,
    pub samples_exported: usize,
    pub dropped: BTreeMap<String, usize>,
    pub dropped_samples: BTreeMap<String, Vec<String>>,
    pub non_printable_stripped: usize,
}

impl CleansingReport {
    pub fn dropped_by(&self, rule: &str) -> usize {
        self.dropped.get(rule).copied().unwrap_or(0)
    }

    fn drop_sample(&mut self, rule: &str, sample_id: &str) {
        *self.dropped.entry(rule.into()).or_insert(0) += 1;
        self.dropped_samples
            .entry(rule.into())
            .or_default()
            .push(sample_id.into());
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportResult {
    pub records: Vec<FinetuneRecord>,
    pub report: CleansingReport,
}

fn flatten(messages: &[ChatMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        if !out.is_empty() {
            out.push_str("\n\n");
        }
        let role = match m.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        out.push_str(role);
        out.push_str(" >> ");
        out.push_str(&m.content);
    }
    out
}

fn clean(text: String, touched: &mut bool) -> String {
    let (cleaned, changed) = strip_non_printable(&text);
    *touched |= changed;
    cleaned
}

/// Label tokens that never occur in the log, typically project names the
/// ticket author added by hand.
fn foreign_tokens<'a>(sample: &'a EvaluationSample, log: &str) -> Vec<&'a str> {
    let mut seen = BTreeSet::new();
    salient_tokens(&sample.summ)
        .into_iter()
        .chain(salient_tokens(&sample.desc))
        .filter(|t| !log.contains(t) && seen.insert(*t))
        .collect()
}

fn root_record<'d>(sample: &EvaluationSample, digest: &'d ErrorDigest) -> Option<&'d ErrorRecord> {
    match sample.root_err_idx.first() {
        Some(&i) => {
            if sample.root_err_idx.iter().all(|&j| digest.get(j).is_some()) {
                digest.get(i)
            } else {
                None
            }
        }
        // unlabeled non-bug: diagnose the deepest error, as the pipeline would
        None if !sample.is_bug => digest.records.last(),
        None => None,
    }
}

fn sample_records(
    sample: &EvaluationSample,
    digest: &ErrorDigest,
    record: &ErrorRecord,
    templates: &TemplateSet,
) -> Result<Vec<FinetuneRecord>, TemplateError> {
    let mut out = Vec::with_capacity(3);
    let make = |task, messages: Vec<ChatMessage>, response: String| FinetuneRecord {
        sample_id: sample.sample_id.clone(),
        task,
        instruction: flatten(&messages),
        response,
    };

    if let Some(&index) = sample.root_err_idx.first() {
        let list = digest.numbered_list();
        let messages = templates
            .root_error
            .render(&[("error_list", list.as_str())])?;
        out.push(make(
            FinetuneTask::RootAnalysis,
            messages,
            index.to_string(),
        ));
    }

    let line = record.matched_line.trim();
    let messages = templates.diagnosis.render(&[("error_line", line)])?;
    let verdict = if sample.is_bug { "True" } else { "False" };
    out.push(make(
        FinetuneTask::Diagnosis,
        messages,
        format!("Final answer: {verdict}"),
    ));

    if sample.is_bug {
        let messages = templates.summarize_chain.render(&[
            ("error_content", record.context.as_str()),
            ("error_line", line),
        ])?;
        let block =
            serde_json::json!({ "summary": sample.summ.trim(), "description": sample.desc });
        let response = format!("```json\n{block}\n```");
        out.push(make(FinetuneTask::Summarization, messages, response));
    }
    Ok(out)
}

/// Builds instruction/response records from labeled samples.
///
/// `digests` must hold one digest per sample, matched by `failure_id`.
/// Samples are processed in `sample_id` order so the output is stable. A
/// sample is dropped whole when its labels name tokens absent from its log,
/// when its root index does not point into its digest, or when it would
/// repeat records already exported.
pub fn export_finetune_dataset(
    samples: &[EvaluationSample],
    digests: &[ErrorDigest],
    templates: &TemplateSet,
) -> Result<ExportResult, TemplateError> {
    let by_id: BTreeMap<&str, &ErrorDigest> =
        digests.iter().map(|d| (d.failure_id.as_str(), d)).collect();
    let mut ordered: Vec<&EvaluationSample> = samples.iter().collect();
    ordered.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let mut report = CleansingReport {
        samples_in: samples.len(),
        ..CleansingReport::default()
    };
    let mut records = Vec::new();
    let mut seen: BTreeSet<Vec<(FinetuneTask, String, String)>> = BTreeSet::new();
    let empty = ErrorDigest::default();

    for original in ordered {
        let mut touched = false;
        let sample = &EvaluationSample {
            raw_log: clean(original.raw_log.clone(), &mut touched),
            summ: clean(original.summ.clone(), &mut touched),
            desc: clean(original.desc.clone(), &mut touched),
            ..original.clone()
        };

        if !foreign_tokens(sample, &sample.raw_log).is_empty() {
            report.drop_sample(RULE_LABEL_LOG_MISMATCH, &sample.sample_id);
            continue;
        }
        let digest = by_id
            .get(sample.sample_id.as_str())
            .copied()
            .unwrap_or(&empty);
        let Some(record) = root_record(sample, digest) else {
            report.drop_sample(RULE_INVALID_ROOT_INDEX, &sample.sample_id);
            continue;
        };

        let mut produced = sample_records(sample, digest, record, templates)?;
        for r in &mut produced {
            r.instruction = clean(core::mem::take(&mut r.instruction), &mut touched);
            r.response = clean(core::mem::take(&mut r.response), &mut touched);
        }
        let key = produced
            .iter()
            .map(|r| (r.task, r.instruction.clone(), r.response.clone()))
            .collect();
        if !seen.insert(key) {
            report.drop_sample(RULE_DUPLICATE, &sample.sample_id);
            continue;
        }
        if touched {
            report.non_printable_stripped += 1;
        }
        report.samples_exported += 1;
        records.extend(produced);
    }
    Ok(ExportResult { records, report })
}

/// One JSON object per line, newline-terminated.
pub fn to_jsonl(records: &[FinetuneRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records always serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::{extract_errors, PatternRegistry, PatternSpec, TestFailure};

    const LOG: &str = "setup ok\nTraceback (most recent call last):\n  File \"/xxx/op_def_library.py\", line 123, in _ExtractInputsAndAttrs\nTypeError: Input 'y' of 'Add' Op has type bfloat16 that does not match type float32 of argument 'x'\n";

    fn sample(id: &str) -> EvaluationSample {
        EvaluationSample {
            sample_id: id.into(),
            raw_log: LOG.into(),
            summ: "Test case failed with TypeError".into(),
            root_err_idx: alloc::vec![1],
            desc: "TypeError: Input 'y' of 'Add' Op has type bfloat16".into(),
            is_bug: true,
            duplicate_group: None,
        }
    }

    fn run(samples: &[EvaluationSample]) -> ExportResult {
        let registry = PatternRegistry::new(&[PatternSpec::new("type", "TypeError", 10)]).unwrap();
        let digests: Vec<_> = samples
            .iter()
            .map(|s| {
                extract_errors(
                    &TestFailure::new(s.sample_id.as_str(), s.raw_log.as_str()),
                    &registry,
                )
            })
            .collect();
        export_finetune_dataset(samples, &digests, &TemplateSet::embedded()).unwrap()
    }

    #[test]
    fn clean_sample_gives_three_records() {
        let out = run(&[sample("a")]);
        let tasks: Vec<_> = out.records.iter().map(|r| r.task).collect();
        assert_eq!(
            tasks,
            [
                FinetuneTask::RootAnalysis,
                FinetuneTask::Diagnosis,
                FinetuneTask::Summarization
            ]
        );
        assert_eq!(out.records[0].response, "1");
        assert_eq!(out.records[1].response, "Final answer: True");
        assert!(out.records[2].response.starts_with("```json\n"));
        assert!(out.report.dropped.is_empty());
    }

    #[test]
    fn project_name_in_label_is_dropped() {
        let mut s = sample("a");
        s.summ = "PROJ-7 test case failed with TypeError".into();
        let out = run(&[s]);
        assert!(out.records.is_empty());
        assert_eq!(out.report.dropped_by(RULE_LABEL_LOG_MISMATCH), 1);
    }

    #[test]
    fn identical_samples_collapse() {
        let out = run(&[sample("a"), sample("b")]);
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.report.dropped_by(RULE_DUPLICATE), 1);
        assert_eq!(out.report.dropped_samples[RULE_DUPLICATE], ["b"]);
    }

    #[test]
    fn out_of_range_root_index() {
        let mut s = sample("a");
        s.root_err_idx = alloc::vec![4];
        let out = run(&[s]);
        assert_eq!(out.report.dropped_by(RULE_INVALID_ROOT_INDEX), 1);
    }

    #[test]
    fn non_bug_has_no_summary_record() {
        let mut s = sample("a");
        s.is_bug = false;
        let out = run(&[s]);
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[1].response, "Final answer: False");
    }

    #[test]
    fn control_chars_stripped() {
        let mut s = sample("a");
        s.raw_log = LOG.replace("setup ok", "setup\u{1b}[0m ok");
        s.desc = "TypeError: Input\u{7} 'y'".into();
        let out = run(&[s]);
        assert_eq!(out.report.non_printable_stripped, 1);
        assert!(out.records.iter().all(|r| !r.response.contains('\u{7}')));
    }

    #[test]
    fn jsonl_is_deterministic() {
        let a = to_jsonl(&run(&[sample("b"), sample("a")]).records);
        let b = to_jsonl(&run(&[sample("a"), sample("b")]).records);
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 3);
    }
}
