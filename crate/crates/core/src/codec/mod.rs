//! Parsers for the tagged output contracts.

pub mod blocks;
pub mod quote;
pub mod report;
pub mod schema;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blocks::{count_evidence, extract_blocks, normalize_loose, Block, BlockScan, EvidenceCount};
pub use quote::{quote_segments, strip_enclosing_quotes, verify_quote, QuoteCheck, Span};
pub use report::{format_report, parse_element_report, parse_element_reports, ReportError, TaggedReport};
pub use schema::{parse_elements_schema, Element, ElementSchema, SchemaError};

use crate::codebook::record::{parse_answer_record, Answer, AnswerParseError};
use crate::model::{ContractKind, OutputContract};

/// A response parsed according to its stage contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Artifact {
    EvidenceList {
        items: Vec<String>,
        abstained: bool,
        malformed: usize,
        /// Item count falls outside the contract's enum_range.
        #[serde(default)]
        out_of_range: bool,
    },
    ElementReport {
        report: TaggedReport,
    },
    ElementReports {
        reports: Vec<TaggedReport>,
    },
    ElementsSchema {
        schema: ElementSchema,
    },
    AnswerRecord {
        answers: BTreeMap<String, Answer>,
    },
    FreeText {
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(untagged)]
pub enum ContractError {
    #[error("{0}")]
    Report(ReportError),
    #[error("report {index}: {error}")]
    RepeatedReport { index: usize, error: ReportError },
    #[error("{0}")]
    Schema(SchemaError),
    #[error("{0}")]
    Answers(AnswerParseError),
}

impl ContractError {
    pub fn code(&self) -> &'static str {
        match self {
            ContractError::Report(e) | ContractError::RepeatedReport { error: e, .. } => e.code(),
            ContractError::Schema(e) => e.code(),
            ContractError::Answers(e) => e.code(),
        }
    }
}

/// Parses `text` per `contract`. Free text always succeeds.
pub fn parse_contract(text: &str, contract: &OutputContract) -> Result<Artifact, ContractError> {
    match contract.kind {
        ContractKind::EvidenceList => {
            let scan = extract_blocks(text, "evidence");
            let counted = count_evidence(text, contract.abstention.as_ref());
            let out_of_range = contract
                .enum_range
                .is_some_and(|r| !r.contains(scan.blocks.len() as i64));
            Ok(Artifact::EvidenceList {
                items: scan.blocks.into_iter().map(|b| b.content).collect(),
                abstained: counted.abstained,
                malformed: scan.malformed,
                out_of_range,
            })
        }
        ContractKind::ElementReport if contract.repeated => {
            let parsed = parse_element_reports(text, contract);
            if parsed.is_empty() {
                return Err(ContractError::Report(ReportError::NoReports));
            }
            let mut reports = Vec::with_capacity(parsed.len());
            for (index, r) in parsed.into_iter().enumerate() {
                reports.push(r.map_err(|error| ContractError::RepeatedReport { index, error })?);
            }
            Ok(Artifact::ElementReports { reports })
        }
        ContractKind::ElementReport => parse_element_report(text, contract)
            .map(|report| Artifact::ElementReport { report })
            .map_err(ContractError::Report),
        ContractKind::ElementsSchema => parse_elements_schema(text)
            .map(|schema| Artifact::ElementsSchema { schema })
            .map_err(ContractError::Schema),
        ContractKind::AnswerRecord => parse_answer_record(text)
            .map(|answers| Artifact::AnswerRecord { answers })
            .map_err(ContractError::Answers),
        ContractKind::FreeText => Ok(Artifact::FreeText { text: text.to_string() }),
    }
}

impl Artifact {
    /// Text substituted into downstream prompts that bind this artifact.
    pub fn binding_text(&self) -> String {
        match self {
            Artifact::EvidenceList { items, .. } => items
                .iter()
                .map(|i| format!("<evidence>{i}</evidence>"))
                .collect::<Vec<_>>()
                .join("\n"),
            Artifact::ElementReport { report } => format_report(report),
            Artifact::ElementReports { reports } => reports.iter().map(format_report).collect::<Vec<_>>().join("\n\n"),
            Artifact::ElementsSchema { schema } => schema.to_canonical_json(),
            Artifact::AnswerRecord { answers } => {
                serde_json::to_string_pretty(&serde_json::json!({ "answers": answers })).expect("answers serialize")
            }
            Artifact::FreeText { text } => text.clone(),
        }
    }

    pub fn schema(&self) -> Option<&ElementSchema> {
        match self {
            Artifact::ElementsSchema { schema } => Some(schema),
            _ => None,
        }
    }

    /// Reports carried by this artifact, in order.
    pub fn reports(&self) -> Vec<&TaggedReport> {
        match self {
            Artifact::ElementReport { report } => vec![report],
            Artifact::ElementReports { reports } => reports.iter().collect(),
            _ => Vec::new(),
        }
    }

    /// Number of items for `stage.x.count` bindings: evidence items, reports, elements or answers.
    pub fn item_count(&self) -> usize {
        match self {
            Artifact::EvidenceList { items, .. } => items.len(),
            Artifact::ElementReport { .. } => 1,
            Artifact::ElementReports { reports } => reports.len(),
            Artifact::ElementsSchema { schema } => schema.elements.len(),
            Artifact::AnswerRecord { answers } => answers.len(),
            Artifact::FreeText { .. } => 1,
        }
    }
}
