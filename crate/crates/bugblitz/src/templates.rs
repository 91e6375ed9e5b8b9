//! Prompt template overrides: every `*.toml` file in the templates directory
//! replaces the embedded template with the same `template_id`.

use std::fs;
use std::path::{Path, PathBuf};

use bugblitz_core::{PromptTemplate, TemplateError, TemplateSet};

#[derive(Debug, thiserror::Error)]
pub enum TemplateLoadError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Invalid {
        path: PathBuf,
        source: TemplateError,
    },
}

pub fn parse_template(text: &str) -> Result<PromptTemplate, String> {
    toml::from_str(text).map_err(|e| e.message().to_string())
}

/// The embedded templates with any overrides from `dir` applied. Files are
/// read in name order so two files for one id resolve predictably.
pub fn load_templates(dir: Option<&Path>) -> Result<TemplateSet, TemplateLoadError> {
    let mut set = TemplateSet::embedded();
    let Some(dir) = dir else {
        return Ok(set);
    };
    let io = |path: &Path, source| TemplateLoadError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    for path in files {
        let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        let template = parse_template(&text).map_err(|message| TemplateLoadError::Parse {
            path: path.clone(),
            message,
        })?;
        set.set(template)
            .map_err(|source| TemplateLoadError::Invalid { path, source })?;
    }
    Ok(set)
}
