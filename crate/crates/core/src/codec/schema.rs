//! Element schemas embedded as JSON in free-form model output.

use std::collections::BTreeSet;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const MIN_ELEMENTS: usize = 10;
pub const MAX_ELEMENTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element {
    pub element_key: String,
    pub element_label: String,
    #[serde(default)]
    pub short_definition: String,
    #[serde(default, deserialize_with = "one_or_many")]
    pub identification_rubric: Vec<String>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub evidence_expectations: Vec<String>,
}

impl Element {
    pub fn new(key: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            element_key: key.into(),
            element_label: label.into(),
            short_definition: String::new(),
            identification_rubric: Vec::new(),
            evidence_expectations: Vec::new(),
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
    }
    Ok(match Option::<OneOrMany>::deserialize(d)? {
        None => Vec::new(),
        Some(OneOrMany::One(s)) => vec![s],
        Some(OneOrMany::Many(v)) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementSchema {
    #[serde(rename = "dimensions")]
    pub elements: Vec<Element>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code", rename_all = "kebab-case")]
pub enum SchemaError {
    #[error("no-structured-region: no JSON object or list found")]
    NoStructuredRegion,
    #[error("malformed-structure at line {line}, column {column}: {message}")]
    MalformedStructure {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cardinality-violation: {count} elements, expected {MIN_ELEMENTS}-{MAX_ELEMENTS}")]
    CardinalityViolation { count: usize },
    #[error("duplicate-key: element_key `{key}` appears more than once")]
    DuplicateKey { key: String },
}

impl SchemaError {
    pub fn code(&self) -> &'static str {
        match self {
            SchemaError::NoStructuredRegion => "no-structured-region",
            SchemaError::MalformedStructure { .. } => "malformed-structure",
            SchemaError::CardinalityViolation { .. } => "cardinality-violation",
            SchemaError::DuplicateKey { .. } => "duplicate-key",
        }
    }
}

impl ElementSchema {
    pub fn validate(&self) -> Result<(), SchemaError> {
        let count = self.elements.len();
        if !(MIN_ELEMENTS..=MAX_ELEMENTS).contains(&count) {
            return Err(SchemaError::CardinalityViolation { count });
        }
        let mut seen = BTreeSet::new();
        for e in &self.elements {
            if !seen.insert(e.element_key.as_str()) {
                return Err(SchemaError::DuplicateKey {
                    key: e.element_key.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn keys(&self) -> Vec<&str> {
        self.elements.iter().map(|e| e.element_key.as_str()).collect()
    }

    /// Pretty JSON in the `{"dimensions": [...]}` shape; parses back unchanged.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }
}

/// Bodies of fenced code blocks (```` ``` ```` with optional language tag).
fn fenced_regions(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut pos = 0;
    while let Some(rel) = text[pos..].find("```") {
        let open = pos + rel + 3;
        let body = text[open..].find('\n').map_or(text.len(), |n| open + n + 1);
        let Some(crel) = text[body..].find("```") else { break };
        out.push((body, &text[body..body + crel]));
        pos = body + crel + 3;
    }
    out
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |n| before.len() - n - 1) + 1;
    (line, column)
}

/// Parses the first JSON value starting at `offset`; trailing prose is ignored.
fn parse_value_at(text: &str, offset: usize) -> Result<Value, SchemaError> {
    let mut stream = serde_json::Deserializer::from_str(&text[offset..]).into_iter::<Value>();
    match stream.next() {
        Some(Ok(v)) => Ok(v),
        Some(Err(e)) => {
            let (l0, c0) = line_col(text, offset);
            let line = l0 + e.line() - 1;
            let column = if e.line() == 1 { c0 + e.column() - 1 } else { e.column() };
            Err(SchemaError::MalformedStructure {
                line,
                column,
                message: e.to_string(),
            })
        }
        None => Err(SchemaError::NoStructuredRegion),
    }
}

fn first_structural(text: &str) -> Option<usize> {
    text.find(['{', '['])
}

pub(crate) fn locate_value(text: &str) -> Result<Value, SchemaError> {
    let mut first_err = None;
    for (at, body) in fenced_regions(text) {
        if let Some(rel) = first_structural(body) {
            if body[..rel].trim().is_empty() {
                match parse_value_at(text, at + rel) {
                    Ok(v) => return Ok(v),
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    let start = first_structural(text).ok_or(SchemaError::NoStructuredRegion)?;
    parse_value_at(text, start)
}

/// Extracts, parses and validates an element schema from model output.
pub fn parse_elements_schema(text: &str) -> Result<ElementSchema, SchemaError> {
    let value = locate_value(text)?;
    let list = match value {
        Value::Array(_) => value,
        Value::Object(mut map) => match map.remove("dimensions").or_else(|| map.remove("elements")) {
            Some(v) => v,
            None => {
                return Err(SchemaError::MalformedStructure {
                    line: 1,
                    column: 1,
                    message: "object has no `dimensions` list".into(),
                })
            }
        },
        _ => return Err(SchemaError::NoStructuredRegion),
    };
    let elements: Vec<Element> = serde_json::from_value(list).map_err(|e| SchemaError::MalformedStructure {
        line: 1,
        column: 1,
        message: e.to_string(),
    })?;
    let schema = ElementSchema { elements };
    schema.validate()?;
    Ok(schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn elements_json(n: usize) -> String {
        let items: Vec<String> = (0..n)
            .map(|i| {
                format!(
                    r#"{{"element_key":"e{i}","element_label":"Element {i}","short_definition":"d","identification_rubric":["a","b"],"evidence_expectations":"x"}}"#
                )
            })
            .collect();
        format!("[{}]", items.join(","))
    }

    #[test]
    fn fenced_seventeen() {
        let text = format!(
            "Here you go:\n```json\n{{\"dimensions\": {}}}\n```\nDone.",
            elements_json(17)
        );
        let s = parse_elements_schema(&text).unwrap();
        assert_eq!(s.elements.len(), 17);
        assert_eq!(s.elements[3].evidence_expectations, vec!["x"]);
    }

    #[test]
    fn bare_list_in_prose() {
        let text = format!("Sure. {} Hope this helps [1].", elements_json(12));
        assert_eq!(parse_elements_schema(&text).unwrap().elements.len(), 12);
    }

    #[test]
    fn cardinality_and_duplicates() {
        assert_eq!(
            parse_elements_schema(&elements_json(9)),
            Err(SchemaError::CardinalityViolation { count: 9 })
        );
        assert_eq!(
            parse_elements_schema(&elements_json(21)),
            Err(SchemaError::CardinalityViolation { count: 21 })
        );
        let dup = elements_json(11).replace("\"e1\"", "\"e0\"");
        assert_eq!(
            parse_elements_schema(&dup),
            Err(SchemaError::DuplicateKey { key: "e0".into() })
        );
    }

    #[test]
    fn no_region_and_malformed() {
        assert_eq!(
            parse_elements_schema("no json here"),
            Err(SchemaError::NoStructuredRegion)
        );
        let err = parse_elements_schema("intro\n{\"dimensions\": [ {\"element_key\": } ]}").unwrap_err();
        match err {
            SchemaError::MalformedStructure { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn canonical_json_round_trips() {
        let s = parse_elements_schema(&elements_json(10)).unwrap();
        assert_eq!(parse_elements_schema(&s.to_canonical_json()).unwrap(), s);
    }
}
