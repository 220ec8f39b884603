//! Read models for reviewers: what a checkpoint is waiting on, with quotes
//! checked against the source text.

use serde::Serialize;

use super::state::{RunState, RunStatus};
use super::{AuditStore, OrchestratorError};
use crate::codec::{verify_quote, Artifact, QuoteCheck};
use crate::model::StageId;

/// Metadata key naming the run input that quotations are checked against.
pub const QUOTE_SOURCE_KEY: &str = "quote_source";

#[derive(Debug, Clone, Serialize)]
pub struct SlotView {
    pub slot: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub artifact: Option<Artifact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub quote_checks: Vec<QuoteCheck>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckpointView {
    pub run_id: String,
    pub stage: StageId,
    pub slots: Vec<SlotView>,
    pub failed_slots: Vec<u32>,
}

/// Quotations carried by an artifact: report quotations and rationale quotes.
pub fn artifact_quotes(a: &Artifact) -> Vec<String> {
    match a {
        Artifact::AnswerRecord { answers } => answers
            .values()
            .filter_map(|ans| ans.rationale.as_ref())
            .flat_map(|r| r.quotes.iter().cloned())
            .collect(),
        _ => a
            .reports()
            .into_iter()
            .flat_map(|r| r.quotations.iter().cloned())
            .collect(),
    }
}

pub fn check_quotes(a: &Artifact, source: Option<&str>) -> Vec<QuoteCheck> {
    match source {
        Some(src) => artifact_quotes(a).iter().map(|q| verify_quote(q, src)).collect(),
        None => Vec::new(),
    }
}

impl CheckpointView {
    pub fn of(state: &RunState, stage: &str) -> Self {
        let source = state
            .spec()
            .metadata
            .get(QUOTE_SOURCE_KEY)
            .and_then(|name| state.inputs.get(name))
            .map(String::as_str);
        let mut slots: std::collections::BTreeSet<u32> = state
            .artifacts
            .get(stage)
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default();
        let failed: Vec<u32> = state
            .failures
            .get(stage)
            .map(|m| {
                m.keys()
                    .copied()
                    .filter(|s| state.artifact(stage, *s).is_none())
                    .collect()
            })
            .unwrap_or_default();
        slots.extend(failed.iter().copied());
        let slots = slots
            .into_iter()
            .map(|slot| {
                let artifact = state.artifact(stage, slot).cloned();
                SlotView {
                    slot,
                    item: state.calls.get(&(stage.to_string(), slot)).and_then(|c| c.item.clone()),
                    quote_checks: artifact.as_ref().map(|a| check_quotes(a, source)).unwrap_or_default(),
                    failure: if artifact.is_none() {
                        state
                            .failures
                            .get(stage)
                            .and_then(|m| m.get(&slot))
                            .map(|f| f.message.clone())
                    } else {
                        None
                    },
                    artifact,
                }
            })
            .collect();
        CheckpointView {
            run_id: state.run_id.clone(),
            stage: stage.to_string(),
            slots,
            failed_slots: failed,
        }
    }
}

/// Every run in the store currently halted at a checkpoint.
pub fn pending_checkpoints(store: &AuditStore) -> Result<Vec<CheckpointView>, OrchestratorError> {
    let mut out = Vec::new();
    for run_id in store.list_runs()? {
        let state = RunState::from_events(&store.read(&run_id)?)?;
        if let RunStatus::AwaitingApproval { stage } = &state.status {
            out.push(CheckpointView::of(&state, stage));
        }
    }
    Ok(out)
}
