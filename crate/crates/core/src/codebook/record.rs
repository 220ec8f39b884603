//! Coded answers and per-paper records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::codec::schema::{locate_value, SchemaError};
use crate::model::RunParams;

/// A selected code, a set of codes, or free text. Which one is expected
/// depends on the item kind.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Value", untagged)]
pub enum AnswerValue {
    Single(String),
    Multi(Vec<String>),
}

fn scalar_code(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(if *b { "YES" } else { "NO" }.to_string()),
        _ => None,
    }
}

impl TryFrom<Value> for AnswerValue {
    type Error = String;

    fn try_from(v: Value) -> Result<Self, Self::Error> {
        match &v {
            Value::Array(items) => items
                .iter()
                .map(|i| scalar_code(i).ok_or_else(|| format!("unsupported list element {i}")))
                .collect::<Result<Vec<_>, _>>()
                .map(AnswerValue::Multi),
            other => scalar_code(other)
                .map(AnswerValue::Single)
                .ok_or_else(|| format!("unsupported answer value {other}")),
        }
    }
}

impl AnswerValue {
    pub fn single(s: impl Into<String>) -> Self {
        AnswerValue::Single(s.into())
    }

    pub fn multi<I, S>(codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        AnswerValue::Multi(codes.into_iter().map(Into::into).collect())
    }

    /// All codes in the value; a single code yields a one-element list.
    pub fn codes(&self) -> Vec<&str> {
        match self {
            AnswerValue::Single(s) => vec![s.as_str()],
            AnswerValue::Multi(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rationale {
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub quotes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub item: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<AnswerValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<Rationale>,
}

impl Answer {
    pub fn new(item: impl Into<String>, value: AnswerValue) -> Self {
        Self {
            item: item.into(),
            value: Some(value),
            rationale: None,
        }
    }

    pub fn with_rationale<I, S>(mut self, text: impl Into<String>, quotes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.rationale = Some(Rationale {
            text: text.into(),
            quotes: quotes.into_iter().map(Into::into).collect(),
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum RecordSource {
    Human { coder: String },
    ModelRun { run: u32 },
    Consensus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodedRecord {
    pub paper_id: String,
    pub answers: BTreeMap<String, Answer>,
    pub source: RecordSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_meta: Option<RunParams>,
}

impl CodedRecord {
    pub fn new(paper_id: impl Into<String>, source: RecordSource) -> Self {
        Self {
            paper_id: paper_id.into(),
            answers: BTreeMap::new(),
            source,
            model_meta: None,
        }
    }

    pub fn with_answer(mut self, answer: Answer) -> Self {
        self.answers.insert(answer.item.clone(), answer);
        self
    }

    pub fn value(&self, item: &str) -> Option<&AnswerValue> {
        self.answers.get(item).and_then(|a| a.value.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code", rename_all = "kebab-case")]
pub enum AnswerParseError {
    #[error("no-structured-region: no JSON answer record found")]
    NoStructuredRegion,
    #[error("malformed-structure: {message}")]
    MalformedStructure { message: String },
}

impl AnswerParseError {
    pub fn code(&self) -> &'static str {
        match self {
            AnswerParseError::NoStructuredRegion => "no-structured-region",
            AnswerParseError::MalformedStructure { .. } => "malformed-structure",
        }
    }
}

/// Parses `{"answers": {"Q10": {"value": .., "rationale": {..}}}}` (or the bare
/// inner map) from model output.
pub fn parse_answer_record(text: &str) -> Result<BTreeMap<String, Answer>, AnswerParseError> {
    let value = locate_value(text).map_err(|e| match e {
        SchemaError::NoStructuredRegion => AnswerParseError::NoStructuredRegion,
        other => AnswerParseError::MalformedStructure {
            message: other.to_string(),
        },
    })?;
    let map = match value {
        Value::Object(mut m) => match m.remove("answers") {
            Some(inner) => inner,
            None => Value::Object(m),
        },
        _ => {
            return Err(AnswerParseError::MalformedStructure {
                message: "expected an object of answers".into(),
            })
        }
    };
    let mut answers: BTreeMap<String, Answer> =
        serde_json::from_value(map).map_err(|e| AnswerParseError::MalformedStructure { message: e.to_string() })?;
    for (id, a) in answers.iter_mut() {
        a.item = id.clone();
    }
    Ok(answers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_wrapped_record() {
        let text = r#"Here is the coding:
```json
{"answers": {"Q10": {"value": 3, "rationale": {"text": "Codes posts.", "quotes": ["we coded posts"]}},
             "Q08": {"value": ["1", 4]}, "Q01": {"value": "Jane Doe"}}}
```"#;
        let a = parse_answer_record(text).unwrap();
        assert_eq!(a["Q10"].value, Some(AnswerValue::single("3")));
        assert_eq!(a["Q10"].item, "Q10");
        assert_eq!(a["Q08"].value, Some(AnswerValue::multi(["1", "4"])));
        assert_eq!(a["Q10"].rationale.as_ref().unwrap().quotes.len(), 1);
    }

    #[test]
    fn rejects_non_objects() {
        assert_eq!(
            parse_answer_record("nothing"),
            Err(AnswerParseError::NoStructuredRegion)
        );
        assert_eq!(parse_answer_record("[1,2]").unwrap_err().code(), "malformed-structure");
    }
}
