//! Shared by the gate-safety property and the acceptance target.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::*;
use leash_core::gateway::{Cassette, CassetteMode, Gateway, ScriptedTransport};
use leash_core::model::{ContractKind, PipelineSpec, RunParams};
use leash_core::orchestrator::{AuditEvent, AuditStore, Decision, EventPayload, Orchestrator, RunOptions, RunStatus};
use proptest::prelude::*;

/// Random DAG over `n` stages with a single sink; `gates` marks checkpointed stages.
pub fn random_spec(n: usize, edges: &[(usize, usize)], gates: &[bool], runs: &[u32]) -> PipelineSpec {
    let mut preds: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(a, b) in edges {
        let (a, b) = (a.min(b), a.max(b));
        if a != b {
            preds[b].insert(a);
        }
    }
    // every non-final stage without successors feeds the final one
    for i in 0..n - 1 {
        if !preds.iter().any(|p| p.contains(&i)) {
            preds[n - 1].insert(i);
        }
    }
    let mut stages = Vec::new();
    let mut edge_list = Vec::new();
    for i in 0..n {
        let id = format!("s{i}");
        let mut text = format!("stage {i} on {{doc}}");
        let mut sources = Vec::new();
        for p in &preds[i] {
            text.push_str(&format!(" [{{in{p}}}]"));
            sources.push((format!("in{p}"), format!("stage.s{p}")));
            edge_list.push((format!("s{p}"), id.clone()));
        }
        let src: Vec<(&str, &str)> = sources.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let mut s = stage(&id, &text, &src, ContractKind::FreeText);
        s.checkpoint = gates[i];
        s.runs = runs[i];
        stages.push(s);
    }
    let e: Vec<(&str, &str)> = edge_list.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    spec("random", stages, &e)
}

/// Runs to completion, approving each gate as it opens.
pub fn drive(orch: &Orchestrator, spec: &PipelineSpec, run_id: &str) {
    let opts = RunOptions {
        run_id: Some(run_id.into()),
        ..Default::default()
    };
    let mut st = orch
        .run(spec, inputs(&[("doc", "text")]), RunParams::new("m"), opts)
        .unwrap();
    let mut guard = 0;
    while let RunStatus::AwaitingApproval { stage } = st.status.clone() {
        orch.resolve_checkpoint(run_id, Decision::approve(stage, "r")).unwrap();
        st = orch.resume(run_id, None).unwrap();
        guard += 1;
        assert!(guard <= spec.stages.len());
    }
    assert!(st.is_complete(), "{:?}", st.status);
}

/// Every call of a descendant of a gate comes after that gate's decision.
pub fn gate_order_holds(spec: &PipelineSpec, events: &[AuditEvent]) -> Result<(), String> {
    for gate in spec.stages.iter().filter(|s| s.checkpoint) {
        let decided = events
            .iter()
            .position(|e| matches!(&e.payload, EventPayload::Decision { decision } if decision.checkpoint == gate.id))
            .ok_or(format!("gate {} never decided", gate.id))?;
        let below = spec.descendants(&gate.id);
        if let Some(bad) = events[..decided]
            .iter()
            .find(|e| matches!(&e.payload, EventPayload::Call { stage, .. } if below.contains(stage)))
        {
            return Err(format!(
                "call {} to {:?} precedes decision on {}",
                bad.seq,
                bad.payload.stage(),
                gate.id
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct GateCase {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub gates: Vec<bool>,
    pub runs: Vec<u32>,
}

pub fn gate_cases() -> impl Strategy<Value = GateCase> {
    (
        2usize..7,
        proptest::collection::vec((0usize..7, 0usize..7), 0..12),
        proptest::collection::vec(any::<bool>(), 7),
        proptest::collection::vec(1u32..4, 7),
    )
        .prop_map(|(n, edges, gates, runs)| {
            let edges = edges.into_iter().filter(|(a, b)| *a < n && *b < n).collect();
            let mut gates = gates[..n].to_vec();
            gates[0] = true;
            GateCase {
                n,
                edges,
                gates,
                runs: runs[..n].to_vec(),
            }
        })
}

/// Records the case once, then drives it again purely from the cassette and
/// checks gate ordering on the replayed trail.
pub fn check_gate_case(case: &GateCase) -> Result<(), String> {
    let spec = random_spec(case.n, &case.edges, &case.gates, &case.runs);
    let dir = tempfile::tempdir().unwrap();
    let cpath = dir.path().join("c.jsonl");
    let t = Arc::new(ScriptedTransport::text(|r| format!("out:{}", r.prompt_text().len())));
    let c = Arc::new(Cassette::open(&cpath, CassetteMode::Record).unwrap());
    let rec = Orchestrator::new(AuditStore::new(dir.path().join("a")).unwrap(), Gateway::new(c, t));
    drive(&rec, &spec, "rec");
    let replay = Orchestrator::new(
        AuditStore::new(dir.path().join("b")).unwrap(),
        Gateway::replay(Arc::new(Cassette::open(&cpath, CassetteMode::Replay).unwrap())),
    );
    drive(&replay, &spec, "rep");
    let events = replay.store().read("rep").unwrap();
    gate_order_holds(&spec, &events)
}

/// Ten-slot stage, trail cut after five calls (the fifth without its parse),
/// then resumed. Returns the slots called after the resume.
pub fn kill_and_resume() -> Result<Vec<u32>, String> {
    let dir = tempfile::tempdir().unwrap();
    let mut s = stage("ev", "Evidence {letter}", &[], ContractKind::EvidenceList);
    s.runs = 10;
    let spec = spec("k", vec![s], &[]);
    let (orch, transport) = scripted(dir.path(), |_| "<evidence>q</evidence>".to_string());
    let opts = RunOptions {
        run_id: Some("r".into()),
        ..Default::default()
    };
    orch.run(&spec, inputs(&[("letter", "x")]), RunParams::new("m"), opts)
        .unwrap();
    if transport.calls() != 10 {
        return Err(format!("first run made {} calls", transport.calls()));
    }
    let path = orch.store().path("r");
    let text = std::fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().take(1 + 8 + 1).collect();
    std::fs::write(&path, kept.join("\n") + "\n").unwrap();
    let called: BTreeSet<u32> = orch.state("r").unwrap().calls.keys().map(|(_, s)| *s).collect();

    let t = Arc::new(ScriptedTransport::text(|_| "<evidence>q</evidence>".to_string()));
    let gw = Gateway::new(Arc::new(Cassette::in_memory(CassetteMode::Record)), t.clone());
    let orch2 = Orchestrator::new(orch.store().clone(), gw);
    let st = orch2.resume("r", None).map_err(|e| e.to_string())?;
    if !st.is_complete() || st.artifacts["ev"].len() != 10 {
        return Err(format!("resumed run ended {:?}", st.status));
    }
    let mut after: Vec<u32> = orch2.store().read("r").unwrap()[kept.len()..]
        .iter()
        .filter_map(|e| match &e.payload {
            EventPayload::Call { slot, .. } => Some(*slot),
            _ => None,
        })
        .collect();
    if after.len() != t.calls() {
        return Err(format!("{} calls logged, {} made", after.len(), t.calls()));
    }
    if let Some(s) = after.iter().find(|s| called.contains(s)) {
        return Err(format!("slot {s} was called twice"));
    }
    // calls within a stage run concurrently, so log order is not slot order
    after.sort_unstable();
    Ok(after)
}
