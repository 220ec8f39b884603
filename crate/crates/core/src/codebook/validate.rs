//! Answer and record validation against the instrument.

use serde::Serialize;

use super::instrument::{Instrument, Item, ItemKind, NONE_CODE};
use super::record::{Answer, AnswerValue, CodedRecord};
use crate::codec::verify_quote;

pub const MIN_QUOTES: usize = 1;
pub const MAX_QUOTES: usize = 10;
pub const MAX_RATIONALE_SENTENCES: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "code", rename_all = "kebab-case")]
pub enum AnswerViolation {
    ItemMismatch {
        expected: String,
        found: String,
    },
    /// No value, or a value of the wrong shape for the item kind.
    WrongShape {
        expected: &'static str,
    },
    UnknownOption {
        option: String,
    },
    NoneCombined,
    MissingRationale,
    QuoteCount {
        count: usize,
    },
    UnverifiedQuote {
        index: usize,
        quote: String,
    },
}

impl AnswerViolation {
    pub fn code(&self) -> &'static str {
        match self {
            AnswerViolation::ItemMismatch { .. } => "item-mismatch",
            AnswerViolation::WrongShape { .. } => "wrong-shape",
            AnswerViolation::UnknownOption { .. } => "unknown-option",
            AnswerViolation::NoneCombined => "none-combined",
            AnswerViolation::MissingRationale => "missing-rationale",
            AnswerViolation::QuoteCount { .. } => "quote-count",
            AnswerViolation::UnverifiedQuote { .. } => "unverified-quote",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "code", rename_all = "kebab-case")]
pub enum AnswerWarning {
    RationaleTooLong { sentences: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AnswerCheck {
    pub violations: Vec<AnswerViolation>,
    pub warnings: Vec<AnswerWarning>,
}

impl AnswerCheck {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn codes(&self) -> Vec<&'static str> {
        self.violations.iter().map(AnswerViolation::code).collect()
    }
}

/// Naive sentence count: runs of text ended by `.`, `?` or `!` followed by
/// whitespace or end of text. Trailing text without a terminator counts too.
pub fn count_sentences(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let mut count = 0;
    let mut has_content = false;
    for (i, &c) in chars.iter().enumerate() {
        if matches!(c, '.' | '?' | '!') {
            let boundary = chars.get(i + 1).is_none_or(|n| n.is_whitespace());
            if boundary && has_content {
                count += 1;
                has_content = false;
            }
        } else if !c.is_whitespace() {
            has_content = true;
        }
    }
    count + usize::from(has_content)
}

/// Checks one answer against its item. `source` enables quote verification.
pub fn validate_answer(item: &Item, answer: &Answer, source: Option<&str>) -> AnswerCheck {
    let mut check = AnswerCheck::default();
    let v = &mut check.violations;
    if !answer.item.is_empty() && answer.item != item.id {
        v.push(AnswerViolation::ItemMismatch {
            expected: item.id.clone(),
            found: answer.item.clone(),
        });
    }

    match (item.kind, &answer.value) {
        (ItemKind::OpenText, Some(AnswerValue::Single(_))) => {}
        (ItemKind::OpenText, _) => v.push(AnswerViolation::WrongShape { expected: "text" }),
        (ItemKind::SelectOne, Some(AnswerValue::Single(code))) => {
            if !item.has_option(code) {
                v.push(AnswerViolation::UnknownOption { option: code.clone() });
            }
        }
        (ItemKind::SelectOne, _) => v.push(AnswerViolation::WrongShape { expected: "one code" }),
        (ItemKind::Multiselect, Some(value)) => {
            let codes = value.codes();
            if codes.is_empty() {
                v.push(AnswerViolation::WrongShape {
                    expected: "one or more codes",
                });
            }
            for code in &codes {
                if !item.has_option(code) {
                    v.push(AnswerViolation::UnknownOption {
                        option: code.to_string(),
                    });
                }
            }
            if item.none_exclusive && codes.contains(&NONE_CODE) && codes.len() > 1 {
                v.push(AnswerViolation::NoneCombined);
            }
        }
        (ItemKind::Multiselect, None) => v.push(AnswerViolation::WrongShape {
            expected: "one or more codes",
        }),
    }

    if item.requires_reason {
        match &answer.rationale {
            Some(r) if !r.text.trim().is_empty() || !r.quotes.is_empty() => {
                let n = r.quotes.len();
                if !(MIN_QUOTES..=MAX_QUOTES).contains(&n) {
                    v.push(AnswerViolation::QuoteCount { count: n });
                }
                let sentences = count_sentences(&r.text);
                if sentences > MAX_RATIONALE_SENTENCES {
                    check.warnings.push(AnswerWarning::RationaleTooLong { sentences });
                }
                if let Some(src) = source {
                    for (index, q) in r.quotes.iter().enumerate() {
                        if !verify_quote(q, src).verified {
                            check.violations.push(AnswerViolation::UnverifiedQuote {
                                index,
                                quote: q.clone(),
                            });
                        }
                    }
                }
            }
            _ => v.push(AnswerViolation::MissingRationale),
        }
    }
    check
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "code", rename_all = "kebab-case")]
pub enum RecordViolation {
    UnknownItem {
        item: String,
    },
    /// Q00 = NO, yet items beyond the screening and metadata parts were answered.
    OutOfScopeAnswers {
        items: Vec<String>,
    },
    Answer {
        item: String,
        violation: AnswerViolation,
    },
}

/// Validates every answer in `record`, plus the screening stop rule.
pub fn validate_record(instrument: &Instrument, record: &CodedRecord, source: Option<&str>) -> Vec<RecordViolation> {
    let mut out = Vec::new();
    for (id, answer) in &record.answers {
        match instrument.item(id) {
            None => out.push(RecordViolation::UnknownItem { item: id.clone() }),
            Some(item) => {
                for violation in validate_answer(item, answer, source).violations {
                    out.push(RecordViolation::Answer {
                        item: id.clone(),
                        violation,
                    });
                }
            }
        }
    }
    if record.value("Q00") == Some(&AnswerValue::single("NO")) {
        let beyond: Vec<String> = record
            .answers
            .keys()
            .filter(|id| instrument.item(id).is_some_and(|i| i.part > 1))
            .cloned()
            .collect();
        if !beyond.is_empty() {
            out.push(RecordViolation::OutOfScopeAnswers { items: beyond });
        }
    }
    out
}
