use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Ground truth for one sample. `is_bug` and `duplicate_group` are optional
/// so plain `summ`/`root_err_idx`/`desc` label files still load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub summ: String,
    #[serde(default)]
    pub root_err_idx: Vec<usize>,
    #[serde(default)]
    pub desc: String,
    #[serde(default = "default_is_bug")]
    pub is_bug: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_group: Option<String>,
}

fn default_is_bug() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelError {
    #[error("labels document is malformed at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("label `{sample_id}`: {message}")]
    Invalid { sample_id: String, message: String },
}

/// Parses a labels document (an object keyed by sample id). Entries come
/// back sorted by id.
pub fn parse_labels(text: &str) -> Result<Vec<(String, Label)>, LabelError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let map: BTreeMap<String, Label> =
        serde_json::from_str(text).map_err(|e| LabelError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    for (id, label) in &map {
        if label.is_bug && label.root_err_idx.is_empty() {
            return Err(LabelError::Invalid {
                sample_id: id.clone(),
                message: "root_err_idx must be non-empty for a bug".into(),
            });
        }
        if label.root_err_idx.contains(&0) {
            return Err(LabelError::Invalid {
                sample_id: id.clone(),
                message: "root_err_idx entries are 1-based".into(),
            });
        }
    }
    Ok(map.into_iter().collect())
}
