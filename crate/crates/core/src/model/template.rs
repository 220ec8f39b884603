//! Prompt templates with single-brace `{name}` placeholders.
//!
//! Substitution is a single left-to-right pass: binding values are copied
//! verbatim and never re-scanned, so a value that itself looks like a
//! placeholder survives untouched. Literal braces are written `{{` and `}}`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("missing-binding: no value bound for placeholder `{0}`")]
    MissingBinding(String),
    #[error("unknown-binding: `{0}` is not a placeholder of this template")]
    UnknownBinding(String),
    #[error("malformed template: stray `{brace}` at byte {pos}")]
    StrayBrace { brace: char, pos: usize },
}

/// One lexical piece of a template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Piece<'a> {
    Literal(&'a str),
    /// An escaped `{{` or `}}`, rendered as a single brace.
    Brace(char),
    Placeholder(&'a str),
}

/// Splits template text into literal runs, escaped braces and placeholders.
pub fn tokenize(text: &str) -> Result<Vec<Piece<'_>>, TemplateError> {
    let bytes = text.as_bytes();
    let mut pieces = Vec::new();
    let mut lit_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' => {
                if lit_start < i {
                    pieces.push(Piece::Literal(&text[lit_start..i]));
                }
                if bytes.get(i + 1) == Some(&b'{') {
                    pieces.push(Piece::Brace('{'));
                    i += 2;
                } else {
                    let name_start = i + 1;
                    let mut j = name_start;
                    while j < bytes.len() && is_ident_byte(bytes[j], j == name_start) {
                        j += 1;
                    }
                    if j == name_start || bytes.get(j) != Some(&b'}') {
                        return Err(TemplateError::StrayBrace { brace: '{', pos: i });
                    }
                    pieces.push(Piece::Placeholder(&text[name_start..j]));
                    i = j + 1;
                }
                lit_start = i;
            }
            b'}' => {
                if lit_start < i {
                    pieces.push(Piece::Literal(&text[lit_start..i]));
                }
                if bytes.get(i + 1) == Some(&b'}') {
                    pieces.push(Piece::Brace('}'));
                    i += 2;
                    lit_start = i;
                } else {
                    return Err(TemplateError::StrayBrace { brace: '}', pos: i });
                }
            }
            _ => i += 1,
        }
    }
    if lit_start < bytes.len() {
        pieces.push(Piece::Literal(&text[lit_start..]));
    }
    Ok(pieces)
}

fn is_ident_byte(b: u8, first: bool) -> bool {
    b == b'_' || b.is_ascii_alphabetic() || (!first && b.is_ascii_digit())
}

/// Placeholder names occurring in `text`, deduplicated.
pub fn scan_placeholders(text: &str) -> Result<BTreeSet<String>, TemplateError> {
    Ok(tokenize(text)?
        .into_iter()
        .filter_map(|p| match p {
            Piece::Placeholder(name) => Some(name.to_string()),
            _ => None,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub text: String,
    #[serde(default)]
    pub required_bindings: BTreeSet<String>,
}

impl PromptTemplate {
    /// Builds a template whose required bindings are exactly the placeholders in `text`.
    pub fn new(text: impl Into<String>) -> Result<Self, TemplateError> {
        let text = text.into();
        let required_bindings = scan_placeholders(&text)?;
        Ok(Self {
            text,
            required_bindings,
        })
    }

    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        render_prompt(self, bindings)
    }
}

/// Renders `template` with `bindings` in one pass.
///
/// Every required binding must be supplied and no others; the first offending
/// name (in sorted order) is reported.
pub fn render_prompt(template: &PromptTemplate, bindings: &BTreeMap<String, String>) -> Result<String, TemplateError> {
    if let Some(missing) = template
        .required_bindings
        .iter()
        .find(|name| !bindings.contains_key(*name))
    {
        return Err(TemplateError::MissingBinding(missing.clone()));
    }
    if let Some(unknown) = bindings.keys().find(|name| !template.required_bindings.contains(*name)) {
        return Err(TemplateError::UnknownBinding(unknown.clone()));
    }
    let pieces = tokenize(&template.text)?;
    let mut out = String::with_capacity(template.text.len());
    for piece in pieces {
        match piece {
            Piece::Literal(s) => out.push_str(s),
            Piece::Brace(c) => out.push(c),
            Piece::Placeholder(name) => match bindings.get(name) {
                Some(value) => out.push_str(value),
                // placeholder in text but not declared: validation reports this
                None => return Err(TemplateError::MissingBinding(name.to_string())),
            },
        }
    }
    Ok(out)
}
