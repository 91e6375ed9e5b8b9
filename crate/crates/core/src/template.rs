//! Prompt templates with `{name}` placeholders.
//!
//! Placeholder syntax follows the usual format-string convention: `{name}`
//! is substituted, `{{` and `}}` produce literal braces, and any other brace
//! is kept as-is. Bound values are inserted verbatim.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::{ChatMessage, Role};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateTurn {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template `{template_id}`: no binding for placeholder `{name}`")]
    MissingBinding { template_id: String, name: String },
    #[error("template `{template_id}`: binding `{name}` does not match any placeholder")]
    UnknownBinding { template_id: String, name: String },
    #[error("template `{template_id}` has no turns")]
    Empty { template_id: String },
    #[error("template `{template_id}` must start with a system or user turn")]
    LeadingAssistant { template_id: String },
    #[error("template `{template_id}`: placeholders {found:?} do not match the required set {expected:?}")]
    PlaceholderMismatch {
        template_id: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("unknown template id `{0}`")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct RawTemplate {
    template_id: String,
    turns: Vec<TemplateTurn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate", into = "RawTemplate")]
pub struct PromptTemplate {
    template_id: String,
    turns: Vec<TemplateTurn>,
    placeholders: BTreeSet<String>,
}

impl TryFrom<RawTemplate> for PromptTemplate {
    type Error = TemplateError;

    fn try_from(raw: RawTemplate) -> Result<Self, Self::Error> {
        PromptTemplate::new(raw.template_id, raw.turns)
    }
}

impl From<PromptTemplate> for RawTemplate {
    fn from(t: PromptTemplate) -> Self {
        RawTemplate {
            template_id: t.template_id,
            turns: t.turns,
        }
    }
}

impl PromptTemplate {
    pub fn new(
        template_id: impl Into<String>,
        turns: Vec<TemplateTurn>,
    ) -> Result<Self, TemplateError> {
        let template_id = template_id.into();
        match turns.first() {
            None => return Err(TemplateError::Empty { template_id }),
            Some(t) if t.role == Role::Assistant => {
                return Err(TemplateError::LeadingAssistant { template_id })
            }
            _ => {}
        }
        let mut placeholders = BTreeSet::new();
        for turn in &turns {
            for segment in parse_segments(&turn.text) {
                if let Segment::Placeholder(name) = segment {
                    placeholders.insert(name.to_string());
                }
            }
        }
        Ok(Self {
            template_id,
            turns,
            placeholders,
        })
    }

    /// Builds a template from `(role, text)` pairs.
    pub fn from_turns(template_id: &str, turns: &[(Role, &str)]) -> Result<Self, TemplateError> {
        let turns = turns
            .iter()
            .map(|(role, text)| TemplateTurn {
                role: *role,
                text: (*text).to_string(),
            })
            .collect();
        Self::new(template_id, turns)
    }

    pub fn template_id(&self) -> &str {
        &self.template_id
    }

    pub fn turns(&self) -> &[TemplateTurn] {
        &self.turns
    }

    pub fn placeholders(&self) -> &BTreeSet<String> {
        &self.placeholders
    }

    /// Substitutes every placeholder. Bindings must cover the placeholder set
    /// exactly.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<Vec<ChatMessage>, TemplateError> {
        for (name, _) in bindings {
            if !self.placeholders.contains(*name) {
                return Err(TemplateError::UnknownBinding {
                    template_id: self.template_id.clone(),
                    name: (*name).to_string(),
                });
            }
        }
        for name in &self.placeholders {
            if !bindings.iter().any(|(n, _)| n == name) {
                return Err(TemplateError::MissingBinding {
                    template_id: self.template_id.clone(),
                    name: name.clone(),
                });
            }
        }
        let lookup = |name: &str| {
            bindings
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| *v)
                .unwrap_or_default()
        };
        Ok(self
            .turns
            .iter()
            .map(|turn| {
                let mut content = String::with_capacity(turn.text.len());
                for segment in parse_segments(&turn.text) {
                    match segment {
                        Segment::Literal(s) => content.push_str(s),
                        Segment::Placeholder(name) => content.push_str(lookup(name)),
                    }
                }
                ChatMessage {
                    role: turn.role,
                    content,
                }
            })
            .collect())
    }

    /// Fails unless the placeholder set equals `expected`.
    pub fn require_placeholders(&self, expected: &[&str]) -> Result<(), TemplateError> {
        let want: BTreeSet<&str> = expected.iter().copied().collect();
        let have: BTreeSet<&str> = self.placeholders.iter().map(|s| s.as_str()).collect();
        if want == have {
            Ok(())
        } else {
            Err(TemplateError::PlaceholderMismatch {
                template_id: self.template_id.clone(),
                expected: want.into_iter().map(String::from).collect(),
                found: have.into_iter().map(String::from).collect(),
            })
        }
    }
}

enum Segment<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c == '_' || c.is_ascii_alphabetic())
        && chars.all(|c| c == '_' || c.is_ascii_alphanumeric())
}

fn parse_segments(text: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut literal_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Segment::Literal(&text[literal_start..=i]));
                i += 2;
                literal_start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Segment::Literal(&text[literal_start..=i]));
                i += 2;
                literal_start = i;
            }
            b'{' => match text[i + 1..].find('}') {
                Some(len) if is_ident(&text[i + 1..i + 1 + len]) => {
                    out.push(Segment::Literal(&text[literal_start..i]));
                    out.push(Segment::Placeholder(&text[i + 1..i + 1 + len]));
                    i += len + 2;
                    literal_start = i;
                }
                _ => i += 1,
            },
            _ => i += 1,
        }
    }
    out.push(Segment::Literal(&text[literal_start..]));
    out.retain(|s| !matches!(s, Segment::Literal("")));
    out
}

pub const ROOT_ERROR_ID: &str = "root_error.v1";
pub const DIAGNOSIS_ID: &str = "diagnosis.v1";
pub const SUMMARIZE_CHAIN_ID: &str = "summarize_chain.v1";
pub const DUPLICATE_ID: &str = "duplicate.v1";

pub const ROOT_ERROR_PLACEHOLDERS: &[&str] = &["error_list"];
pub const DIAGNOSIS_PLACEHOLDERS: &[&str] = &["error_line"];
pub const SUMMARIZE_PLACEHOLDERS: &[&str] = &["error_content", "error_line"];
pub const DUPLICATE_PLACEHOLDERS: &[&str] =
    &["summary_a", "description_a", "summary_b", "description_b"];

/// The four stage templates used by the analysis pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub root_error: PromptTemplate,
    pub diagnosis: PromptTemplate,
    pub summarize_chain: PromptTemplate,
    pub duplicate: PromptTemplate,
}

impl TemplateSet {
    /// The built-in templates.
    pub fn embedded() -> Self {
        crate::prompts::embedded_templates()
    }

    pub fn ids() -> [&'static str; 4] {
        [
            ROOT_ERROR_ID,
            DIAGNOSIS_ID,
            SUMMARIZE_CHAIN_ID,
            DUPLICATE_ID,
        ]
    }

    /// Replaces the template with the same id after checking its placeholders.
    pub fn set(&mut self, template: PromptTemplate) -> Result<(), TemplateError> {
        let (slot, required) = match template.template_id() {
            ROOT_ERROR_ID => (&mut self.root_error, ROOT_ERROR_PLACEHOLDERS),
            DIAGNOSIS_ID => (&mut self.diagnosis, DIAGNOSIS_PLACEHOLDERS),
            SUMMARIZE_CHAIN_ID => (&mut self.summarize_chain, SUMMARIZE_PLACEHOLDERS),
            DUPLICATE_ID => (&mut self.duplicate, DUPLICATE_PLACEHOLDERS),
            other => return Err(TemplateError::UnknownTemplate(other.to_string())),
        };
        template.require_placeholders(required)?;
        *slot = template;
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PromptTemplate> {
        match id {
            ROOT_ERROR_ID => Some(&self.root_error),
            DIAGNOSIS_ID => Some(&self.diagnosis),
            SUMMARIZE_CHAIN_ID => Some(&self.summarize_chain),
            DUPLICATE_ID => Some(&self.duplicate),
            _ => None,
        }
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::embedded()
    }
}
