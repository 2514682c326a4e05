use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TaskgenError;
use crate::schema::{serialize_schema_with, CoordOrder, ScreenSchema};

/// Slot filled with the serialized screen schema.
pub const SCHEMA_SLOT: &str = "THE SCREEN SCHEMA";

/// Which prompt a template implements; decides how completions are parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateKind {
    ScreenQa,
    ScreenNavigation,
    ScreenSummarization,
    ShortAnswersSingle,
    ShortAnswersMultiple,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 5] = [
        TemplateKind::ScreenQa,
        TemplateKind::ScreenNavigation,
        TemplateKind::ScreenSummarization,
        TemplateKind::ShortAnswersSingle,
        TemplateKind::ShortAnswersMultiple,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::ScreenQa => "screen-qa",
            TemplateKind::ScreenNavigation => "screen-navigation",
            TemplateKind::ScreenSummarization => "screen-summarization",
            TemplateKind::ShortAnswersSingle => "short-answers-single",
            TemplateKind::ShortAnswersMultiple => "short-answers-multiple",
        }
    }

    fn body(self) -> &'static str {
        match self {
            TemplateKind::ScreenQa => include_str!("../../templates/screen_qa.txt"),
            TemplateKind::ScreenNavigation => include_str!("../../templates/screen_navigation.txt"),
            TemplateKind::ScreenSummarization => include_str!("../../templates/screen_summarization.txt"),
            TemplateKind::ShortAnswersSingle => include_str!("../../templates/short_answers_single.txt"),
            TemplateKind::ShortAnswersMultiple => include_str!("../../templates/short_answers_multiple.txt"),
        }
    }

    /// The shipped prompt for this kind.
    pub fn builtin(self) -> PromptTemplate {
        PromptTemplate::new(self.name(), self.body()).expect("builtin templates are well-formed")
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateKind {
    type Err = TaskgenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s {
            "qa" | "screen-qa" => TemplateKind::ScreenQa,
            "navigation" | "screen-navigation" => TemplateKind::ScreenNavigation,
            "summarization" | "screen-summarization" => TemplateKind::ScreenSummarization,
            "short-single" | "short-answers-single" => TemplateKind::ShortAnswersSingle,
            "short-multiple" | "short-answers-multiple" => TemplateKind::ShortAnswersMultiple,
            other => return Err(TaskgenError::UnknownTemplate(other.to_owned())),
        };
        Ok(kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Literal(String),
    Slot(String),
}

/// Prompt text with `{NAME}` slots; `{{` and `}}` stand for literal braces.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub name: String,
    body: String,
    pieces: Vec<Piece>,
    placeholders: BTreeSet<String>,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Result<Self, TaskgenError> {
        let body = body.into();
        let pieces = split_pieces(&body)?;
        let placeholders = pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.clone()),
                Piece::Literal(_) => None,
            })
            .collect();
        Ok(Self { name: name.into(), body, pieces, placeholders })
    }

    /// Raw template text, escapes included.
    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn placeholders(&self) -> &BTreeSet<String> {
        &self.placeholders
    }
}

fn split_pieces(body: &str) -> Result<Vec<Piece>, TaskgenError> {
    let mut pieces = Vec::new();
    let mut lit = String::new();
    let mut chars = body.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '{' if chars.peek().map(|p| p.1) == Some('{') => {
                chars.next();
                lit.push('{');
            }
            '}' if chars.peek().map(|p| p.1) == Some('}') => {
                chars.next();
                lit.push('}');
            }
            '{' => {
                let rest = &body[i + 1..];
                let end = rest.find(['{', '}']).filter(|&e| rest.as_bytes()[e] == b'}');
                let Some(end) = end else {
                    return Err(TaskgenError::MalformedTemplate(format!("unclosed '{{' at byte {i}")));
                };
                let name = &rest[..end];
                if name.trim().is_empty() {
                    return Err(TaskgenError::MalformedTemplate(format!("empty placeholder at byte {i}")));
                }
                if !lit.is_empty() {
                    pieces.push(Piece::Literal(std::mem::take(&mut lit)));
                }
                pieces.push(Piece::Slot(name.to_owned()));
                for _ in 0..name.chars().count() + 1 {
                    chars.next();
                }
            }
            '}' => return Err(TaskgenError::MalformedTemplate(format!("stray '}}' at byte {i}"))),
            c => lit.push(c),
        }
    }
    if !lit.is_empty() {
        pieces.push(Piece::Literal(lit));
    }
    Ok(pieces)
}

/// Fills every slot. The schema slot takes `schema` serialized with `order`;
/// the rest come from `params`, keyed by slot name.
pub fn render_prompt(
    template: &PromptTemplate,
    schema: &ScreenSchema,
    params: &BTreeMap<String, String>,
    order: CoordOrder,
) -> Result<String, TaskgenError> {
    let mut out = String::with_capacity(template.body.len());
    let mut schema_text = None;
    for piece in &template.pieces {
        match piece {
            Piece::Literal(s) => out.push_str(s),
            Piece::Slot(name) if name == SCHEMA_SLOT => {
                out.push_str(schema_text.get_or_insert_with(|| serialize_schema_with(schema, order)))
            }
            Piece::Slot(name) => {
                let value = params.get(name).ok_or_else(|| TaskgenError::UnboundPlaceholder(name.clone()))?;
                out.push_str(value);
            }
        }
    }
    Ok(out)
}
