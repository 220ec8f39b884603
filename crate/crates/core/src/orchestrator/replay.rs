//! Offline reconstruction of a run's artifacts from its trail alone.

use std::collections::BTreeMap;

use super::audit::{check_sequence, AuditEvent, EventPayload};
use super::{OrchestratorError, Verdict};
use crate::codec::{parse_contract, Artifact};
use crate::model::{OutputContract, StageId};

/// Re-parses every recorded response with the contract stored beside it and
/// applies edit decisions. No gateway is involved, so the result depends only
/// on the trail.
pub fn replay_run(events: &[AuditEvent]) -> Result<BTreeMap<(StageId, u32), Artifact>, OrchestratorError> {
    check_sequence(events)?;
    let mut out = BTreeMap::new();
    let mut contracts: BTreeMap<StageId, OutputContract> = BTreeMap::new();
    if let Some(EventPayload::RunStarted { spec, .. }) = events.first().map(|e| &e.payload) {
        for s in &spec.stages {
            contracts.insert(s.id.clone(), s.contract.clone());
        }
    }
    for ev in events {
        match &ev.payload {
            EventPayload::Call {
                stage,
                slot,
                contract,
                response: Some(resp),
                ..
            } => {
                contracts.entry(stage.clone()).or_insert_with(|| contract.clone());
                if let Ok(a) = parse_contract(&resp.text, contract) {
                    out.insert((stage.clone(), *slot), a);
                }
            }
            EventPayload::Decision { decision } if decision.verdict == Verdict::Edit => {
                let contract = contracts
                    .get(&decision.checkpoint)
                    .ok_or_else(|| OrchestratorError::CorruptAudit {
                        detail: format!("edit for unknown stage {}", decision.checkpoint),
                    })?;
                let text = decision.edited_artifact.as_deref().unwrap_or_default();
                let a = parse_contract(text, contract).map_err(|e| OrchestratorError::CorruptAudit {
                    detail: format!("edit at seq {} does not parse: {e}", ev.seq),
                })?;
                out.insert((decision.checkpoint.clone(), decision.slot.unwrap_or(0)), a);
            }
            _ => {}
        }
    }
    Ok(out)
}
