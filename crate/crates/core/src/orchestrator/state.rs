//! Run state, reconstructed purely by folding audit events.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::audit::{check_sequence, AuditEvent, EventPayload, FailureRecord};
use super::{Decision, OrchestratorError, Verdict};
use crate::codec::{parse_contract, Artifact};
use crate::gateway::{CompletionResponse, GatewayError};
use crate::model::{PipelineSpec, RunParams, StageId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStatus {
    Pending,
    Running,
    AwaitingApproval,
    Approved,
    Rejected,
    Complete,
    Failed,
}

impl StageStatus {
    /// Successors may consume this stage's artifacts.
    pub fn is_done(self) -> bool {
        matches!(self, StageStatus::Complete | StageStatus::Approved)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum RunStatus {
    Running,
    AwaitingApproval { stage: StageId },
    Rejected { stage: StageId },
    Complete,
    Failed { code: String, message: String },
}

/// A recorded gateway call for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub attempt: u32,
    pub item: Option<String>,
    pub prompt: String,
    pub response: Option<CompletionResponse>,
    pub error: Option<GatewayError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub run_id: String,
    pub spec_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub status: RunStatus,
    pub stage_states: BTreeMap<StageId, StageStatus>,
    /// Parsed outputs by stage, then slot.
    pub artifacts: BTreeMap<StageId, BTreeMap<u32, Artifact>>,
    /// Slots whose call or parse failed.
    pub failures: BTreeMap<StageId, BTreeMap<u32, FailureRecord>>,
    pub decisions: Vec<Decision>,
    /// Sequence number of the last folded event.
    pub clock: u64,
    #[serde(skip)]
    pub spec: Option<PipelineSpec>,
    #[serde(skip)]
    pub inputs: BTreeMap<String, String>,
    #[serde(skip)]
    pub params: Option<RunParams>,
    #[serde(skip)]
    pub spec_path: Option<String>,
    #[serde(skip)]
    pub calls: BTreeMap<(StageId, u32), CallRecord>,
}

impl RunState {
    pub fn stage_status(&self, stage: &str) -> StageStatus {
        self.stage_states.get(stage).copied().unwrap_or(StageStatus::Pending)
    }

    pub fn artifact(&self, stage: &str, slot: u32) -> Option<&Artifact> {
        self.artifacts.get(stage).and_then(|m| m.get(&slot))
    }

    /// Slot has a parsed artifact or a recorded failure.
    pub fn slot_settled(&self, stage: &str, slot: u32) -> bool {
        self.artifact(stage, slot).is_some() || self.failures.get(stage).is_some_and(|m| m.contains_key(&slot))
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }

    pub fn spec(&self) -> &PipelineSpec {
        self.spec.as_ref().expect("state folded from a run-started event")
    }

    /// Artifact of the report stage, when the run is complete.
    pub fn report(&self) -> Option<&Artifact> {
        let stage = self.spec.as_ref()?.report_stage()?;
        self.artifacts.get(&stage.id)?.values().next()
    }

    /// Reconstructs state from a trail whose first event is `run-started`.
    pub fn from_events(events: &[AuditEvent]) -> Result<Self, OrchestratorError> {
        check_sequence(events)?;
        let Some(first) = events.first() else {
            return Err(OrchestratorError::CorruptAudit {
                detail: "empty trail".into(),
            });
        };
        let EventPayload::RunStarted {
            spec_digest,
            spec,
            spec_path,
            inputs,
            params,
            parent,
        } = &first.payload
        else {
            return Err(OrchestratorError::CorruptAudit {
                detail: "trail does not begin with run-started".into(),
            });
        };
        let mut state = RunState {
            run_id: first.run_id.clone(),
            spec_digest: spec_digest.clone(),
            parent: parent.clone(),
            status: RunStatus::Running,
            stage_states: spec
                .stages
                .iter()
                .map(|s| (s.id.clone(), StageStatus::Pending))
                .collect(),
            artifacts: BTreeMap::new(),
            failures: BTreeMap::new(),
            decisions: Vec::new(),
            clock: first.seq,
            spec: Some((**spec).clone()),
            inputs: inputs.clone(),
            params: Some(params.clone()),
            spec_path: spec_path.clone(),
            calls: BTreeMap::new(),
        };
        for ev in &events[1..] {
            state.apply_event(ev)?;
        }
        Ok(state)
    }

    pub(crate) fn apply_event(&mut self, ev: &AuditEvent) -> Result<(), OrchestratorError> {
        self.clock = ev.seq;
        match &ev.payload {
            EventPayload::RunStarted { .. } => {
                return Err(OrchestratorError::CorruptAudit {
                    detail: format!("second run-started at seq {}", ev.seq),
                })
            }
            EventPayload::Call {
                stage,
                slot,
                attempt,
                item,
                prompt,
                response,
                error,
                ..
            } => {
                self.stage_states.insert(stage.clone(), StageStatus::Running);
                if let Some(err) = error {
                    self.failures.entry(stage.clone()).or_default().insert(
                        *slot,
                        FailureRecord {
                            code: err.code().into(),
                            message: err.to_string(),
                        },
                    );
                }
                self.calls.insert(
                    (stage.clone(), *slot),
                    CallRecord {
                        attempt: *attempt,
                        item: item.clone(),
                        prompt: prompt.clone(),
                        response: response.clone(),
                        error: error.clone(),
                    },
                );
            }
            EventPayload::Parse {
                stage,
                slot,
                artifact,
                error,
            } => match (artifact, error) {
                (Some(a), _) => {
                    self.artifacts
                        .entry(stage.clone())
                        .or_default()
                        .insert(*slot, a.clone());
                }
                (None, Some(f)) => {
                    self.failures.entry(stage.clone()).or_default().insert(*slot, f.clone());
                }
                (None, None) => {
                    return Err(OrchestratorError::CorruptAudit {
                        detail: format!("parse event {} has neither artifact nor error", ev.seq),
                    })
                }
            },
            EventPayload::CheckpointOpened { stage, .. } => {
                self.stage_states.insert(stage.clone(), StageStatus::AwaitingApproval);
                self.status = RunStatus::AwaitingApproval { stage: stage.clone() };
            }
            EventPayload::Decision { decision } => {
                let stage = decision.checkpoint.clone();
                match decision.verdict {
                    Verdict::Approve => {
                        self.stage_states.insert(stage, StageStatus::Approved);
                        self.status = self.progress_status();
                    }
                    Verdict::Reject => {
                        self.stage_states.insert(stage.clone(), StageStatus::Rejected);
                        self.status = RunStatus::Rejected { stage };
                    }
                    Verdict::Edit => {
                        let artifact = self.parse_edit(decision)?;
                        let slot = decision.slot.unwrap_or(0);
                        self.artifacts.entry(stage.clone()).or_default().insert(slot, artifact);
                        if let Some(f) = self.failures.get_mut(&stage) {
                            f.remove(&slot);
                        }
                        self.stage_states.insert(stage, StageStatus::Approved);
                        self.status = self.progress_status();
                    }
                }
                self.decisions.push(decision.clone());
            }
            EventPayload::StageComplete { stage, .. } => {
                self.stage_states.insert(stage.clone(), StageStatus::Complete);
                self.status = self.progress_status();
            }
            EventPayload::Error { stage, code, message } => {
                if let Some(stage) = stage {
                    if code == "stage-failed" || code == "contract-violation" {
                        self.stage_states.insert(stage.clone(), StageStatus::Failed);
                    }
                }
                self.status = RunStatus::Failed {
                    code: code.clone(),
                    message: message.clone(),
                };
            }
        }
        Ok(())
    }

    fn progress_status(&self) -> RunStatus {
        if self.stage_states.values().all(|s| s.is_done()) {
            RunStatus::Complete
        } else {
            RunStatus::Running
        }
    }

    fn parse_edit(&self, decision: &Decision) -> Result<Artifact, OrchestratorError> {
        let stage = self
            .spec()
            .stage(&decision.checkpoint)
            .ok_or_else(|| OrchestratorError::CorruptAudit {
                detail: format!("decision names unknown stage {}", decision.checkpoint),
            })?;
        let text = decision.edited_artifact.as_deref().unwrap_or_default();
        parse_contract(text, &stage.contract).map_err(|e| OrchestratorError::CorruptAudit {
            detail: format!("recorded edit no longer satisfies its contract: {e}"),
        })
    }
}
