//! Append-only audit trail, one JSON line per event, one file per run.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Decision, OrchestratorError};
use crate::codec::Artifact;
use crate::gateway::{CompletionResponse, GatewayError};
use crate::model::{OutputContract, PipelineSpec, RunParams, StageId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventPayload {
    RunStarted {
        spec_digest: String,
        spec: Box<PipelineSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spec_path: Option<String>,
        inputs: BTreeMap<String, String>,
        params: RunParams,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        parent: Option<String>,
    },
    Call {
        stage: StageId,
        slot: u32,
        attempt: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        item: Option<String>,
        key: String,
        contract: OutputContract,
        prompt: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        response: Option<CompletionResponse>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<GatewayError>,
    },
    Parse {
        stage: StageId,
        slot: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        artifact: Option<Artifact>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<FailureRecord>,
    },
    CheckpointOpened {
        stage: StageId,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        failed_slots: Vec<u32>,
    },
    Decision {
        decision: Decision,
    },
    StageComplete {
        stage: StageId,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        failed_slots: Vec<u32>,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stage: Option<StageId>,
        code: String,
        message: String,
    },
}

impl EventPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            EventPayload::RunStarted { .. } => "run-started",
            EventPayload::Call { .. } => "call",
            EventPayload::Parse { .. } => "parse",
            EventPayload::CheckpointOpened { .. } => "checkpoint-opened",
            EventPayload::Decision { .. } => "decision",
            EventPayload::StageComplete { .. } => "stage-complete",
            EventPayload::Error { .. } => "error",
        }
    }

    /// Stage the event concerns, if any.
    pub fn stage(&self) -> Option<&str> {
        match self {
            EventPayload::Call { stage, .. }
            | EventPayload::Parse { stage, .. }
            | EventPayload::CheckpointOpened { stage, .. }
            | EventPayload::StageComplete { stage, .. } => Some(stage),
            EventPayload::Decision { decision } => Some(&decision.checkpoint),
            EventPayload::Error { stage, .. } => stage.as_deref(),
            EventPayload::RunStarted { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub run_id: String,
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub payload: EventPayload,
}

/// Checks that `events` belong to one run and are numbered 1, 2, 3, ...
pub fn check_sequence(events: &[AuditEvent]) -> Result<(), OrchestratorError> {
    let Some(first) = events.first() else {
        return Ok(());
    };
    for (i, e) in events.iter().enumerate() {
        let want = first.seq + i as u64;
        if e.seq != want {
            return Err(OrchestratorError::CorruptAudit {
                detail: format!("expected seq {want}, found {}", e.seq),
            });
        }
        if e.run_id != first.run_id {
            return Err(OrchestratorError::CorruptAudit {
                detail: format!("event {} belongs to run {}", e.seq, e.run_id),
            });
        }
    }
    Ok(())
}

/// Directory of `<run_id>.jsonl` trails.
#[derive(Debug, Clone)]
pub struct AuditStore {
    dir: PathBuf,
}

impl AuditStore {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, OrchestratorError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| OrchestratorError::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, run_id: &str) -> PathBuf {
        self.dir.join(format!("{run_id}.jsonl"))
    }

    pub fn exists(&self, run_id: &str) -> bool {
        self.path(run_id).exists()
    }

    /// Run ids with a trail in this store, sorted.
    pub fn list_runs(&self) -> Result<Vec<String>, OrchestratorError> {
        let rd = std::fs::read_dir(&self.dir).map_err(|e| OrchestratorError::io(&self.dir, e))?;
        let mut ids: Vec<String> = rd
            .filter_map(Result::ok)
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_suffix(".jsonl").map(str::to_string)
            })
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn read(&self, run_id: &str) -> Result<Vec<AuditEvent>, OrchestratorError> {
        let path = self.path(run_id);
        if !path.exists() {
            return Err(OrchestratorError::UnknownRun { run_id: run_id.into() });
        }
        let events = read_trail(&path)?;
        check_sequence(&events)?;
        if events.first().is_some_and(|e| e.seq != 1) {
            return Err(OrchestratorError::CorruptAudit {
                detail: "trail does not start at seq 1".into(),
            });
        }
        Ok(events)
    }

    /// Creates a new, empty trail; fails if the run already exists.
    pub fn create(&self, run_id: &str) -> Result<AuditWriter, OrchestratorError> {
        let path = self.path(run_id);
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(|e| OrchestratorError::io(&path, e))?;
        Ok(AuditWriter {
            run_id: run_id.into(),
            file,
            path,
            next_seq: 1,
        })
    }

    /// Opens an existing trail for appending after `last_seq`.
    pub fn append_to(&self, run_id: &str, last_seq: u64) -> Result<AuditWriter, OrchestratorError> {
        let path = self.path(run_id);
        let file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| OrchestratorError::io(&path, e))?;
        Ok(AuditWriter {
            run_id: run_id.into(),
            file,
            path,
            next_seq: last_seq + 1,
        })
    }
}

pub fn read_trail(path: &Path) -> Result<Vec<AuditEvent>, OrchestratorError> {
    let file = File::open(path).map_err(|e| OrchestratorError::io(path, e))?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| OrchestratorError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: AuditEvent = serde_json::from_str(&line).map_err(|e| OrchestratorError::CorruptAudit {
            detail: format!("line {}: {e}", i + 1),
        })?;
        events.push(ev);
    }
    Ok(events)
}

/// Single writer for one run's trail.
#[derive(Debug)]
pub struct AuditWriter {
    run_id: String,
    file: File,
    path: PathBuf,
    next_seq: u64,
}

impl AuditWriter {
    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    /// Appends one event. Decision events are synced to disk before returning.
    pub fn append(&mut self, payload: EventPayload) -> Result<AuditEvent, OrchestratorError> {
        let event = AuditEvent {
            run_id: self.run_id.clone(),
            seq: self.next_seq,
            timestamp: Utc::now(),
            payload,
        };
        let mut line = serde_json::to_string(&event).expect("audit event serializes");
        line.push('\n');
        let io = |e| OrchestratorError::io(&self.path, e);
        self.file.write_all(line.as_bytes()).map_err(io)?;
        if matches!(event.payload, EventPayload::Decision { .. }) {
            self.file.sync_data().map_err(io)?;
        }
        self.next_seq += 1;
        Ok(event)
    }
}
