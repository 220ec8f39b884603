//! Majority aggregation of repeated coding runs for one paper.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use super::instrument::{Instrument, ItemKind};
use super::record::{Answer, AnswerValue, CodedRecord, RecordSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItemStatus {
    Resolved,
    /// No strict majority among the runs that answered.
    Unresolved,
    /// Open text with differing answers; every variant is kept.
    Variants,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemDispersion {
    pub answered: usize,
    /// Share of answering runs that gave the most frequent value.
    pub agreement: f64,
    pub status: ItemStatus,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<AnswerValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionReport {
    pub paper_id: String,
    pub runs: usize,
    pub items: BTreeMap<String, ItemDispersion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("no records to aggregate")]
    Empty,
    #[error("mixed-paper-ids: {0} and {1}")]
    MixedPaperIds(String, String),
}

/// Multiselect answers compare as sets.
fn vote_key(v: &AnswerValue) -> AnswerValue {
    match v {
        AnswerValue::Multi(codes) => {
            let mut c = codes.clone();
            c.sort();
            c.dedup();
            AnswerValue::Multi(c)
        }
        other => other.clone(),
    }
}

pub fn aggregate_runs(
    instrument: &Instrument,
    records: &[CodedRecord],
) -> Result<(CodedRecord, DispersionReport), AggregateError> {
    let first = records.first().ok_or(AggregateError::Empty)?;
    if let Some(other) = records.iter().find(|r| r.paper_id != first.paper_id) {
        return Err(AggregateError::MixedPaperIds(
            first.paper_id.clone(),
            other.paper_id.clone(),
        ));
    }
    let mut consensus = CodedRecord::new(first.paper_id.clone(), RecordSource::Consensus);
    consensus.model_meta = first.model_meta.clone();
    let mut report = DispersionReport {
        paper_id: first.paper_id.clone(),
        runs: records.len(),
        items: BTreeMap::new(),
    };

    let item_ids: std::collections::BTreeSet<&String> = records.iter().flat_map(|r| r.answers.keys()).collect();
    for id in item_ids {
        let answers: Vec<&Answer> = records
            .iter()
            .filter_map(|r| r.answers.get(id))
            .filter(|a| a.value.is_some())
            .collect();
        let answered = answers.len();
        if answered == 0 {
            continue;
        }
        // count in first-seen order so ties and rationale choice are deterministic
        let mut tally: Vec<(AnswerValue, usize)> = Vec::new();
        for a in &answers {
            let key = vote_key(a.value.as_ref().expect("filtered"));
            match tally.iter_mut().find(|(k, _)| *k == key) {
                Some((_, n)) => *n += 1,
                None => tally.push((key, 1)),
            }
        }
        let (top_key, top) = tally
            .iter()
            .fold(None::<&(AnswerValue, usize)>, |best, t| match best {
                Some(b) if b.1 >= t.1 => Some(b),
                _ => Some(t),
            })
            .expect("non-empty tally");
        let agreement = *top as f64 / answered as f64;
        let open_text = instrument.item(id).is_some_and(|i| i.kind == ItemKind::OpenText);
        let majority = top * 2 > answered;
        let status = if open_text && tally.len() > 1 {
            ItemStatus::Variants
        } else if majority {
            ItemStatus::Resolved
        } else {
            ItemStatus::Unresolved
        };
        let variants = if status == ItemStatus::Variants {
            tally.iter().map(|(k, _)| k.clone()).collect()
        } else {
            Vec::new()
        };
        let winner = answers
            .iter()
            .find(|a| vote_key(a.value.as_ref().expect("filtered")) == *top_key)
            .expect("winner among answers");
        let answer = if status == ItemStatus::Resolved {
            (*winner).clone()
        } else {
            Answer {
                item: id.clone(),
                value: None,
                rationale: None,
            }
        };
        consensus.answers.insert(id.clone(), answer);
        report.items.insert(
            id.clone(),
            ItemDispersion {
                answered,
                agreement,
                status,
                variants,
            },
        );
    }
    Ok((consensus, report))
}
