//! Labeled evaluation datasets, recall/precision metrics and fine-tuning
//! data export.

mod export;
mod labels;
mod metrics;

pub use export::{
    export_finetune_dataset, to_jsonl, CleansingReport, ExportResult, FinetuneRecord, FinetuneTask,
    RULE_DUPLICATE, RULE_INVALID_ROOT_INDEX, RULE_LABEL_LOG_MISMATCH,
};
pub use labels::{parse_labels, Label, LabelError};
pub use metrics::{
    compute_precision, compute_recall, evaluate, score_root_accuracy, summary_matches_label,
    MetricsReport, SampleScore,
};

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// One labeled failure: its log plus ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationSample {
    pub sample_id: String,
    pub raw_log: String,
    pub summ: String,
    pub root_err_idx: Vec<usize>,
    pub desc: String,
    pub is_bug: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_group: Option<String>,
}

impl EvaluationSample {
    pub fn from_label(sample_id: &str, label: Label, raw_log: String) -> Self {
        Self {
            sample_id: sample_id.into(),
            raw_log,
            summ: label.summ,
            root_err_idx: label.root_err_idx,
            desc: label.desc,
            is_bug: label.is_bug,
            duplicate_group: label.duplicate_group,
        }
    }
}
