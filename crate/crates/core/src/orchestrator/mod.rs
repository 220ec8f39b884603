//! Executes pipeline specs: staged execution, fan-out, checkpoint gates,
//! audit trail, resume and replay.

pub mod audit;
pub mod fanout;
pub mod replay;
pub mod review;
pub mod state;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{AuditEvent, AuditStore, AuditWriter, EventPayload, FailureRecord};
pub use fanout::{segment_chars, segment_paragraphs, FanItem, SlotPlan};
pub use replay::replay_run;
pub use review::{pending_checkpoints, CheckpointView, SlotView};
pub use state::{CallRecord, RunState, RunStatus, StageStatus};

use crate::codec::{parse_contract, Artifact};
use crate::gateway::{CompletionRequest, Gateway, GatewayError};
use crate::model::{
    validate_pipeline, BindingSource, FanoutPolicy, PipelineSpec, RunParams, Stage, StageId, Violation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Approve,
    Reject,
    Edit,
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "approve" => Ok(Verdict::Approve),
            "reject" => Ok(Verdict::Reject),
            "edit" => Ok(Verdict::Edit),
            other => Err(format!("unknown verdict `{other}`")),
        }
    }
}

/// A human decision at a checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub checkpoint: StageId,
    /// Slot whose artifact an edit replaces; defaults to slot 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<u32>,
    pub verdict: Verdict,
    /// Replacement output as raw text, parsed against the stage contract.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_artifact: Option<String>,
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub note: String,
}

impl Decision {
    pub fn approve(stage: impl Into<String>, author: impl Into<String>) -> Self {
        Self {
            checkpoint: stage.into(),
            slot: None,
            verdict: Verdict::Approve,
            edited_artifact: None,
            author: author.into(),
            note: String::new(),
        }
    }

    pub fn reject(stage: impl Into<String>, author: impl Into<String>) -> Self {
        Self {
            verdict: Verdict::Reject,
            ..Self::approve(stage, author)
        }
    }

    pub fn edit(stage: impl Into<String>, author: impl Into<String>, artifact: impl Into<String>) -> Self {
        Self {
            verdict: Verdict::Edit,
            edited_artifact: Some(artifact.into()),
            ..Self::approve(stage, author)
        }
    }
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid pipeline: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidSpec(Vec<Violation>),
    #[error("invalid run parameters: {0}")]
    InvalidParams(String),
    #[error("missing-input: run input `{name}` is not bound")]
    MissingInput { name: String },
    #[error("stage-failed: every slot of stage `{stage}` failed")]
    StageFailed { stage: StageId },
    #[error("contract-violation in stage `{stage}`: {message}")]
    ContractViolation {
        stage: StageId,
        code: String,
        message: String,
    },
    #[error("bad-fanout in stage `{stage}`: {message}")]
    BadFanout { stage: StageId, message: String },
    #[error("render-error in stage `{stage}`: {message}")]
    Render { stage: StageId, message: String },
    #[error("{0}")]
    Gateway(GatewayError),
    #[error("not-awaiting: stage `{stage}` is {status}, not awaiting a decision")]
    NotAwaiting { stage: StageId, status: String },
    #[error("unknown-stage: `{stage}`")]
    UnknownStage { stage: StageId },
    #[error("edit-requires-artifact: an edit decision must carry edited_artifact")]
    EditWithoutArtifact,
    #[error("corrupt-audit: {detail}")]
    CorruptAudit { detail: String },
    #[error("digest-mismatch: run was started with spec {expected}, got {found}")]
    DigestMismatch { expected: String, found: String },
    #[error("unknown-run: no audit trail for `{run_id}`")]
    UnknownRun { run_id: String },
    #[error("run-exists: `{run_id}` already has an audit trail")]
    RunExists { run_id: String },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl OrchestratorError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        OrchestratorError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            OrchestratorError::InvalidSpec(_) => "invalid-spec",
            OrchestratorError::InvalidParams(_) => "invalid-params",
            OrchestratorError::MissingInput { .. } => "missing-input",
            OrchestratorError::StageFailed { .. } => "stage-failed",
            OrchestratorError::ContractViolation { .. } => "contract-violation",
            OrchestratorError::BadFanout { .. } => "bad-fanout",
            OrchestratorError::Render { .. } => "render-error",
            OrchestratorError::Gateway(e) => e.code(),
            OrchestratorError::NotAwaiting { .. } => "not-awaiting",
            OrchestratorError::UnknownStage { .. } => "unknown-stage",
            OrchestratorError::EditWithoutArtifact => "edit-requires-artifact",
            OrchestratorError::CorruptAudit { .. } => "corrupt-audit",
            OrchestratorError::DigestMismatch { .. } => "digest-mismatch",
            OrchestratorError::UnknownRun { .. } => "unknown-run",
            OrchestratorError::RunExists { .. } => "run-exists",
            OrchestratorError::Io { .. } => "io",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Defaults to a fresh UUID.
    pub run_id: Option<String>,
    /// Earlier run this one iterates on.
    pub parent: Option<String>,
    pub spec_path: Option<String>,
}

/// Runs pipelines against one audit store and one gateway.
#[derive(Clone)]
pub struct Orchestrator {
    store: AuditStore,
    gateway: Gateway,
}

impl Orchestrator {
    pub fn new(store: AuditStore, gateway: Gateway) -> Self {
        Self { store, gateway }
    }

    pub fn store(&self) -> &AuditStore {
        &self.store
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    /// Starts a run and executes until completion or the first open checkpoint.
    pub fn run(
        &self,
        spec: &PipelineSpec,
        inputs: BTreeMap<String, String>,
        params: RunParams,
        opts: RunOptions,
    ) -> Result<RunState, OrchestratorError> {
        let violations = validate_pipeline(spec);
        if !violations.is_empty() {
            return Err(OrchestratorError::InvalidSpec(violations));
        }
        params
            .validate()
            .map_err(|e| OrchestratorError::InvalidParams(e.to_string()))?;
        if let Some(name) = spec.required_inputs().into_iter().find(|n| !inputs.contains_key(n)) {
            return Err(OrchestratorError::MissingInput { name });
        }
        let run_id = opts.run_id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
        if self.store.exists(&run_id) {
            return Err(OrchestratorError::RunExists { run_id });
        }
        let mut writer = self.store.create(&run_id)?;
        let started = writer.append(EventPayload::RunStarted {
            spec_digest: spec.digest(),
            spec: Box::new(spec.clone()),
            spec_path: opts.spec_path,
            inputs,
            params,
            parent: opts.parent,
        })?;
        tracing::info!(run_id = %run_id, spec = %spec.id, "run started");
        let state = RunState::from_events(&[started])?;
        self.drive(state, writer)
    }

    /// Current state of a run, folded from its trail.
    pub fn state(&self, run_id: &str) -> Result<RunState, OrchestratorError> {
        RunState::from_events(&self.store.read(run_id)?)
    }

    /// Continues a run from its trail. Recorded calls are never re-issued.
    /// A supplied spec must match the digest the run started with.
    pub fn resume(&self, run_id: &str, spec: Option<&PipelineSpec>) -> Result<RunState, OrchestratorError> {
        let state = self.state(run_id)?;
        if let Some(spec) = spec {
            let found = spec.digest();
            if found != state.spec_digest {
                return Err(OrchestratorError::DigestMismatch {
                    expected: state.spec_digest.clone(),
                    found,
                });
            }
        }
        if matches!(
            state.status,
            RunStatus::Complete | RunStatus::AwaitingApproval { .. } | RunStatus::Rejected { .. }
        ) {
            return Ok(state);
        }
        let writer = self.store.append_to(run_id, state.clock)?;
        self.drive(state, writer)
    }

    /// Records a decision on a stage awaiting approval (or previously rejected).
    /// Execution does not continue; call [`Orchestrator::resume`] for that.
    pub fn resolve_checkpoint(&self, run_id: &str, decision: Decision) -> Result<RunState, OrchestratorError> {
        let state = self.state(run_id)?;
        let stage = state
            .spec()
            .stage(&decision.checkpoint)
            .ok_or_else(|| OrchestratorError::UnknownStage {
                stage: decision.checkpoint.clone(),
            })?
            .clone();
        let status = state.stage_status(&stage.id);
        if !matches!(status, StageStatus::AwaitingApproval | StageStatus::Rejected) {
            return Err(OrchestratorError::NotAwaiting {
                stage: stage.id.clone(),
                status: serde_json::to_value(status)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
            });
        }
        if decision.verdict == Verdict::Edit {
            let text = decision
                .edited_artifact
                .as_deref()
                .ok_or(OrchestratorError::EditWithoutArtifact)?;
            parse_contract(text, &stage.contract).map_err(|e| OrchestratorError::ContractViolation {
                stage: stage.id.clone(),
                code: e.code().into(),
                message: e.to_string(),
            })?;
        }
        let mut writer = self.store.append_to(run_id, state.clock)?;
        let ev = writer.append(EventPayload::Decision { decision })?;
        let mut state = state;
        state.apply_event(&ev)?;
        Ok(state)
    }

    fn drive(&self, mut state: RunState, writer: AuditWriter) -> Result<RunState, OrchestratorError> {
        let writer = Mutex::new(writer);
        let spec = state.spec().clone();
        let order: Vec<Stage> = spec
            .topo_order()
            .map_err(|stages| OrchestratorError::InvalidSpec(vec![Violation::Cycle { stages }]))?
            .into_iter()
            .cloned()
            .collect();
        for stage in &order {
            match state.stage_status(&stage.id) {
                StageStatus::Complete | StageStatus::Approved => continue,
                StageStatus::AwaitingApproval | StageStatus::Rejected | StageStatus::Failed => return Ok(state),
                StageStatus::Pending | StageStatus::Running => {}
            }
            self.execute_stage(&mut state, stage, &writer)?;
            if !state.stage_status(&stage.id).is_done() {
                return Ok(state);
            }
        }
        Ok(state)
    }

    fn execute_stage(
        &self,
        state: &mut RunState,
        stage: &Stage,
        writer: &Mutex<AuditWriter>,
    ) -> Result<(), OrchestratorError> {
        let append = |state: &mut RunState, payload: EventPayload| -> Result<(), OrchestratorError> {
            let ev = writer.lock().expect("audit writer lock").append(payload)?;
            fold_into(state, ev)
        };
        let fail = |state: &mut RunState, err: OrchestratorError| -> Result<(), OrchestratorError> {
            append(
                state,
                EventPayload::Error {
                    stage: Some(stage.id.clone()),
                    code: err.code().into(),
                    message: err.to_string(),
                },
            )?;
            Err(err)
        };

        let items = fanout::plan_items(
            stage,
            |name| state.inputs.get(name).cloned(),
            |up| state.artifact(up, 0).cloned(),
        );
        let items = match items {
            Ok(items) => items,
            Err(message) => {
                let err = OrchestratorError::BadFanout {
                    stage: stage.id.clone(),
                    message,
                };
                return fail(state, err);
            }
        };
        if items.as_ref().is_some_and(Vec::is_empty) {
            let err = OrchestratorError::BadFanout {
                stage: stage.id.clone(),
                message: "fan-out produced no items".into(),
            };
            return fail(state, err);
        }
        let plan = fanout::plan_slots(items, stage.runs);

        // recorded calls that were never parsed (the process died in between)
        for p in &plan {
            if state.slot_settled(&stage.id, p.slot) {
                continue;
            }
            if let Some(resp) = state
                .calls
                .get(&(stage.id.clone(), p.slot))
                .and_then(|c| c.response.clone())
            {
                let payload = parse_payload(stage, p.slot, &resp.text);
                append(state, payload)?;
            }
        }

        let todo: Vec<&SlotPlan> = plan
            .iter()
            .filter(|p| {
                !state.slot_settled(&stage.id, p.slot) && !state.calls.contains_key(&(stage.id.clone(), p.slot))
            })
            .collect();
        let mut requests = Vec::with_capacity(todo.len());
        for p in &todo {
            match render_slot(state, stage, p) {
                Ok(prompt) => {
                    let params = state.params.clone().expect("run params");
                    requests.push(CompletionRequest::user(params, prompt).with_attempt(p.attempt));
                }
                Err(message) => {
                    let err = OrchestratorError::Render {
                        stage: stage.id.clone(),
                        message,
                    };
                    return fail(state, err);
                }
            }
        }

        let replay_miss: Mutex<Option<GatewayError>> = Mutex::new(None);
        let shared = Mutex::new(&mut *state);
        let next = AtomicUsize::new(0);
        let workers = self.gateway.max_in_flight().min(todo.len());
        let write_err: Mutex<Option<OrchestratorError>> = Mutex::new(None);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let (Some(p), Some(req)) = (todo.get(i), requests.get(i)) else {
                        break;
                    };
                    if replay_miss.lock().expect("lock").is_some() {
                        break;
                    }
                    let outcome = self.gateway.complete(req);
                    if let Err(e @ GatewayError::ReplayMiss { .. }) = &outcome {
                        replay_miss.lock().expect("lock").get_or_insert(e.clone());
                        break;
                    }
                    let (response, error) = match outcome {
                        Ok(r) => (Some(r), None),
                        Err(e) => (None, Some(e)),
                    };
                    let parse = response.as_ref().map(|r| parse_payload(stage, p.slot, &r.text));
                    let call = EventPayload::Call {
                        stage: stage.id.clone(),
                        slot: p.slot,
                        attempt: p.attempt,
                        item: p.item.as_ref().map(|it| it.key.clone()),
                        key: req.idempotency_key(),
                        contract: stage.contract.clone(),
                        prompt: req.prompt_text(),
                        response,
                        error,
                    };
                    // call and parse go in back to back under the state lock
                    let mut st = shared.lock().expect("state lock");
                    let res = append(&mut st, call).and_then(|_| match parse {
                        Some(pl) => append(&mut st, pl),
                        None => Ok(()),
                    });
                    if let Err(e) = res {
                        write_err.lock().expect("lock").get_or_insert(e);
                        break;
                    }
                });
            }
        });
        if let Some(e) = write_err.into_inner().expect("lock") {
            return Err(e);
        }
        if let Some(miss) = replay_miss.into_inner().expect("lock") {
            return fail(state, OrchestratorError::Gateway(miss));
        }

        let failed: Vec<u32> = plan
            .iter()
            .filter(|p| state.artifact(&stage.id, p.slot).is_none())
            .map(|p| p.slot)
            .collect();
        if failed.len() == plan.len() {
            let failures = state.failures.get(&stage.id).cloned().unwrap_or_default();
            let all_parse = !failures.is_empty()
                && plan.iter().all(|p| {
                    state
                        .calls
                        .get(&(stage.id.clone(), p.slot))
                        .is_some_and(|c| c.response.is_some())
                });
            let err = if all_parse {
                let first = failures.values().next().expect("failures recorded");
                OrchestratorError::ContractViolation {
                    stage: stage.id.clone(),
                    code: first.code.clone(),
                    message: first.message.clone(),
                }
            } else {
                OrchestratorError::StageFailed {
                    stage: stage.id.clone(),
                }
            };
            // stage-level failure is recorded under a fixed code so the fold marks the stage failed
            let code = if all_parse {
                "contract-violation"
            } else {
                "stage-failed"
            };
            append(
                state,
                EventPayload::Error {
                    stage: Some(stage.id.clone()),
                    code: code.into(),
                    message: err.to_string(),
                },
            )?;
            return Err(err);
        }
        if stage.checkpoint {
            append(
                state,
                EventPayload::CheckpointOpened {
                    stage: stage.id.clone(),
                    failed_slots: failed,
                },
            )?;
        } else {
            append(
                state,
                EventPayload::StageComplete {
                    stage: stage.id.clone(),
                    failed_slots: failed,
                },
            )?;
        }
        Ok(())
    }
}

fn fold_into(state: &mut RunState, ev: AuditEvent) -> Result<(), OrchestratorError> {
    state.apply_event(&ev)
}

fn parse_payload(stage: &Stage, slot: u32, text: &str) -> EventPayload {
    match parse_contract(text, &stage.contract) {
        Ok(artifact) => EventPayload::Parse {
            stage: stage.id.clone(),
            slot,
            artifact: Some(artifact),
            error: None,
        },
        Err(e) => EventPayload::Parse {
            stage: stage.id.clone(),
            slot,
            artifact: None,
            error: Some(FailureRecord {
                code: e.code().into(),
                message: e.to_string(),
            }),
        },
    }
}

/// Text bound for `stage.<id>`: the single artifact, or every successful slot
/// wrapped with its item.
pub fn upstream_binding(state: &RunState, up: &Stage) -> String {
    let Some(arts) = state.artifacts.get(&up.id) else {
        return String::new();
    };
    if arts.len() == 1 && up.fanout == FanoutPolicy::None && up.runs == 1 {
        return arts.values().next().expect("one artifact").binding_text();
    }
    let item_tag = match up.fanout {
        FanoutPolicy::PerSegment { .. } => Some("segment"),
        FanoutPolicy::PerDimension { .. } => Some("elements"),
        FanoutPolicy::None => None,
    };
    let mut out = Vec::new();
    for (slot, art) in arts {
        let item = state
            .calls
            .get(&(up.id.clone(), *slot))
            .and_then(|c| c.item.clone())
            .and_then(|key| item_label(state, up, &key).or(Some(key)));
        let analysis = format!("<analysis>{}</analysis>", art.binding_text());
        out.push(match (item_tag, item) {
            (Some(tag), Some(item)) => format!("<{tag}>{item}</{tag}>{analysis}"),
            _ => analysis,
        });
    }
    out.join("\n")
}

/// Human label for a fan-out key (element label for schema-driven fan-out).
fn item_label(state: &RunState, stage: &Stage, key: &str) -> Option<String> {
    match &stage.fanout {
        FanoutPolicy::PerDimension {
            from_stage: Some(up), ..
        } => state
            .artifact(up, 0)?
            .schema()?
            .elements
            .iter()
            .find(|e| e.element_key == key)
            .map(|e| e.element_label.clone()),
        FanoutPolicy::PerDimension {
            from_input: Some(name), ..
        } => crate::codec::parse_elements_schema(state.inputs.get(name)?)
            .ok()?
            .elements
            .into_iter()
            .find(|e| e.element_key == key)
            .map(|e| e.element_label),
        FanoutPolicy::PerSegment { .. } => {
            let n: usize = key.strip_prefix("segment-")?.parse().ok()?;
            let items = fanout::plan_items(stage, |name| state.inputs.get(name).cloned(), |_| None).ok()??;
            items.get(n.checked_sub(1)?).map(|i| i.text.clone())
        }
        _ => None,
    }
}

fn render_slot(state: &RunState, stage: &Stage, p: &SlotPlan) -> Result<String, String> {
    let spec = state.spec();
    let mut bindings = BTreeMap::new();
    for name in &stage.template.required_bindings {
        let source = stage
            .source_of(name)
            .ok_or_else(|| format!("unparseable source for `{name}`"))?;
        let value = match source {
            BindingSource::Input(n) => state
                .inputs
                .get(&n)
                .cloned()
                .ok_or_else(|| format!("missing input `{n}`"))?,
            BindingSource::Stage(id) => {
                let up = spec.stage(&id).ok_or_else(|| format!("unknown stage `{id}`"))?;
                upstream_binding(state, up)
            }
            BindingSource::StageCount(id) => {
                let arts = state.artifacts.get(&id);
                let up = spec.stage(&id).ok_or_else(|| format!("unknown stage `{id}`"))?;
                let n = match arts {
                    Some(a) if up.fanout == FanoutPolicy::None && up.runs == 1 => {
                        a.values().next().map_or(0, Artifact::item_count)
                    }
                    Some(a) => a.len(),
                    None => 0,
                };
                n.to_string()
            }
            BindingSource::SlotIndex => (p.item_index + 1).to_string(),
            BindingSource::SlotItem => p.item.as_ref().map(|i| i.text.clone()).unwrap_or_default(),
        };
        bindings.insert(name.clone(), value);
    }
    stage.template.render(&bindings).map_err(|e| e.to_string())
}
