//! LLM-driven task generation: prompt rendering, completion, response
//! parsing and heuristic validation.

mod backend;
mod generate;
mod parse;
mod template;
mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::QuantBox;

pub use backend::{
    complete, BackendError, CompletionBackend, CompletionError, CompletionRequest, CompletionResult, HttpBackend,
    RetryPolicy, StubBackend,
};
pub use generate::{
    generate_dataset, Diagnostic, GenerationConfig, GenerationItem, GenerationStats, DEFAULT_FLAGGED_LIMIT,
    DEFAULT_MAX_IN_FLIGHT, SUMMARY_INPUT,
};
pub use parse::{
    extract_json, parse_nav_entries, parse_nav_response, parse_qa_entries, parse_qa_response,
    parse_rephrase_response, parse_summary_response,
};
pub use template::{render_prompt, PromptTemplate, TemplateKind, SCHEMA_SLOT};
pub use validate::{nav_target_matches, validate_qa, Verdict, NAV_MATCH_IOU};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskgenError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("malformed template: {0}")]
    MalformedTemplate(String),
    #[error("placeholder {{{0}}} is not bound")]
    UnboundPlaceholder(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("stub backend: {0}")]
    Stub(String),
    #[error("no parseable JSON in completion")]
    NoJson,
    #[error("entry {index}: missing or empty field {field:?}")]
    MissingField { index: usize, field: &'static str },
    #[error("expected a list of entries under {0:?}")]
    NoEntries(&'static str),
    #[error("entry {index}: answer {answer:?} is not a click on a valid box")]
    BadClick { index: usize, answer: String },
    #[error("no valid entries in completion")]
    NoValidEntries,
    #[error("no bracketed list in completion")]
    NoList,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

impl QaPair {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Option<Self> {
        let (question, answer) = (question.into(), answer.into());
        (!question.trim().is_empty() && !answer.trim().is_empty()).then_some(Self { question, answer })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavigationSample {
    pub instruction: String,
    pub target: QuantBox,
}
