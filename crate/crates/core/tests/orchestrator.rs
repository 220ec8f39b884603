mod common;

use std::sync::Arc;

use common::*;
use leash_core::codec::Artifact;
use leash_core::gateway::{
    Cassette, CassetteMode, CompletionResponse, Gateway, RetryPolicy, ScriptedTransport, TransportError,
};
use leash_core::model::{ContractKind, FanoutPolicy, PipelineSpec, RunParams};
use leash_core::orchestrator::{
    pending_checkpoints, replay_run, AuditStore, Decision, EventPayload, Orchestrator, RunOptions, RunStatus,
    StageStatus,
};

fn two_stage() -> PipelineSpec {
    let mut schema = stage(
        "schema",
        "Define elements for: {letter}",
        &[],
        ContractKind::ElementsSchema,
    );
    schema.checkpoint = true;
    let mut apply = stage(
        "apply",
        "Assess {elm} ({i}) in {letter}",
        &[("elm", "slot.item"), ("i", "slot.index")],
        ContractKind::ElementReport,
    );
    apply.fanout = FanoutPolicy::PerDimension {
        dimensions: vec![],
        from_stage: Some("schema".into()),
        from_input: None,
    };
    let synth = stage(
        "synth",
        "Summarize {count} analyses:\n{results}",
        &[("count", "stage.apply.count"), ("results", "stage.apply")],
        ContractKind::FreeText,
    );
    spec(
        "two",
        vec![schema, apply, synth],
        &[("schema", "apply"), ("apply", "synth")],
    )
}

fn responder(n_elements: usize) -> impl Fn(&leash_core::gateway::CompletionRequest) -> String + Send + Sync {
    move |req| {
        let p = req.prompt_text();
        if p.starts_with("Define") {
            schema_json(n_elements)
        } else if p.starts_with("Assess") {
            report_text(7)
        } else {
            format!("summary of {} chars", p.len())
        }
    }
}

fn opts(id: &str) -> RunOptions {
    RunOptions {
        run_id: Some(id.into()),
        ..Default::default()
    }
}

#[test]
fn checkpoint_halts_until_approved() {
    let dir = tempfile::tempdir().unwrap();
    let (orch, transport) = scripted(dir.path(), responder(12));
    let spec = two_stage();
    let st = orch
        .run(
            &spec,
            inputs(&[("letter", "Dear friend")]),
            RunParams::new("m"),
            opts("r1"),
        )
        .unwrap();
    assert_eq!(st.status, RunStatus::AwaitingApproval { stage: "schema".into() });
    assert_eq!(transport.calls(), 1);
    assert_eq!(pending_checkpoints(orch.store()).unwrap().len(), 1);

    // resuming without a decision does nothing
    let st = orch.resume("r1", None).unwrap();
    assert_eq!(st.stage_status("apply"), StageStatus::Pending);
    assert_eq!(transport.calls(), 1);

    orch.resolve_checkpoint("r1", Decision::approve("schema", "ana"))
        .unwrap();
    let st = orch.resume("r1", Some(&spec)).unwrap();
    assert!(st.is_complete(), "{:?}", st.status);
    assert_eq!(transport.calls(), 1 + 12 + 1);
    assert_eq!(st.artifacts["apply"].len(), 12);
    let synth_prompt = &st.calls[&("synth".to_string(), 0)].prompt;
    assert!(synth_prompt.starts_with("Summarize 12 analyses"));
    assert_eq!(synth_prompt.matches("<analysis>").count(), 12);
    assert!(synth_prompt.contains("<elements>Element 3</elements>"));
}

#[test]
fn edit_replaces_schema_before_fanout() {
    let dir = tempfile::tempdir().unwrap();
    let (orch, transport) = scripted(dir.path(), responder(18));
    let spec = two_stage();
    orch.run(&spec, inputs(&[("letter", "x")]), RunParams::new("m"), opts("r"))
        .unwrap();
    let st = orch
        .resolve_checkpoint("r", Decision::edit("schema", "ana", schema_json(17)))
        .unwrap();
    assert_eq!(st.stage_status("schema"), StageStatus::Approved);
    let st = orch.resume("r", None).unwrap();
    assert!(st.is_complete());
    assert_eq!(st.artifacts["apply"].len(), 17);
    assert_eq!(transport.calls(), 1 + 17 + 1);
}

#[test]
fn edit_must_satisfy_contract() {
    let dir = tempfile::tempdir().unwrap();
    let (orch, _) = scripted(dir.path(), responder(12));
    orch.run(&two_stage(), inputs(&[("letter", "x")]), RunParams::new("m"), opts("r"))
        .unwrap();
    let err = orch
        .resolve_checkpoint("r", Decision::edit("schema", "ana", schema_json(3)))
        .unwrap_err();
    assert_eq!(err.code(), "contract-violation");
    // the bad edit left no trace
    assert_eq!(orch.state("r").unwrap().decisions.len(), 0);
    let err = orch
        .resolve_checkpoint("r", Decision::approve("apply", "ana"))
        .unwrap_err();
    assert_eq!(err.code(), "not-awaiting");
}

#[test]
fn reject_stops_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (orch, transport) = scripted(dir.path(), responder(12));
    orch.run(&two_stage(), inputs(&[("letter", "x")]), RunParams::new("m"), opts("r"))
        .unwrap();
    orch.resolve_checkpoint("r", Decision::reject("schema", "ana")).unwrap();
    let st = orch.resume("r", None).unwrap();
    assert_eq!(st.status, RunStatus::Rejected { stage: "schema".into() });
    assert_eq!(transport.calls(), 1);
    // a rejected gate can still be approved later
    orch.resolve_checkpoint("r", Decision::approve("schema", "ana"))
        .unwrap();
    assert!(orch.resume("r", None).unwrap().is_complete());
}

#[test]
fn resume_rejects_a_changed_spec() {
    let dir = tempfile::tempdir().unwrap();
    let (orch, _) = scripted(dir.path(), responder(12));
    let spec = two_stage();
    orch.run(&spec, inputs(&[("letter", "x")]), RunParams::new("m"), opts("r"))
        .unwrap();
    let mut changed = spec.clone();
    changed.stages[2].template = leash_core::model::PromptTemplate::new("Other {count} {results}").unwrap();
    let err = orch.resume("r", Some(&changed)).unwrap_err();
    assert_eq!(err.code(), "digest-mismatch");
}

#[test]
fn missing_input_and_invalid_spec_fail_before_any_call() {
    let dir = tempfile::tempdir().unwrap();
    let (orch, transport) = scripted(dir.path(), responder(12));
    let err = orch
        .run(&two_stage(), inputs(&[]), RunParams::new("m"), opts("a"))
        .unwrap_err();
    assert_eq!(err.code(), "missing-input");
    let mut bad = two_stage();
    bad.edges.push(leash_core::model::Edge {
        from: "synth".into(),
        to: "schema".into(),
    });
    let err = orch
        .run(&bad, inputs(&[("letter", "x")]), RunParams::new("m"), opts("b"))
        .unwrap_err();
    assert_eq!(err.code(), "invalid-spec");
    assert_eq!(transport.calls(), 0);
    assert!(!orch.store().exists("a"));
}

#[test]
fn provider_error_on_one_slot_does_not_sink_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = stage("count", "Find evidence in {letter}", &[], ContractKind::EvidenceList);
    s.runs = 4;
    let spec = spec("ev", vec![s], &[]);
    let transport = Arc::new(ScriptedTransport::new(|req| {
        if req.attempt == 2 {
            Err(TransportError::Status {
                status: 500,
                body: "boom".into(),
            })
        } else {
            Ok(CompletionResponse::text("<evidence>a</evidence><evidence>b</evidence>"))
        }
    }));
    let cassette = Arc::new(Cassette::open(dir.path().join("c.jsonl"), CassetteMode::Record).unwrap());
    let gw = Gateway::new(cassette, transport.clone()).with_retry(RetryPolicy::no_delay());
    let orch = Orchestrator::new(AuditStore::new(dir.path().join("audit")).unwrap(), gw);
    let st = orch
        .run(&spec, inputs(&[("letter", "x")]), RunParams::new("m"), opts("r"))
        .unwrap();
    assert!(st.is_complete());
    assert_eq!(st.artifacts["count"].len(), 3);
    assert_eq!(st.failures["count"][&1].code, "provider-error");

    // replaying the recorded cassette reproduces the same failure without a network
    let cassette = Arc::new(Cassette::open(dir.path().join("c.jsonl"), CassetteMode::Replay).unwrap());
    let replay = Orchestrator::new(
        AuditStore::new(dir.path().join("audit2")).unwrap(),
        Gateway::replay(cassette),
    );
    let st2 = replay
        .run(&spec, inputs(&[("letter", "x")]), RunParams::new("m"), opts("r"))
        .unwrap();
    assert_eq!(st2.artifacts, st.artifacts);
    assert_eq!(st2.failures, st.failures);
}

#[test]
fn replay_miss_is_an_error_not_a_network_call() {
    let dir = tempfile::tempdir().unwrap();
    let orch = Orchestrator::new(
        AuditStore::new(dir.path()).unwrap(),
        Gateway::replay(Arc::new(Cassette::in_memory(CassetteMode::Replay))),
    );
    let err = orch
        .run(&two_stage(), inputs(&[("letter", "x")]), RunParams::new("m"), opts("r"))
        .unwrap_err();
    assert_eq!(err.code(), "replay-miss");
    assert!(matches!(orch.state("r").unwrap().status, RunStatus::Failed { .. }));
}

#[test]
fn all_slots_unparseable_is_a_contract_violation() {
    let dir = tempfile::tempdir().unwrap();
    let (orch, _) = scripted(dir.path(), |_| "no tags at all".to_string());
    let s = stage("r", "Judge {letter}", &[], ContractKind::ElementReport);
    let err = orch
        .run(
            &spec("p", vec![s], &[]),
            inputs(&[("letter", "x")]),
            RunParams::new("m"),
            opts("r"),
        )
        .unwrap_err();
    assert_eq!(err.code(), "contract-violation");
    assert_eq!(orch.state("r").unwrap().stage_status("r"), StageStatus::Failed);
}

#[test]
fn trail_replays_to_the_same_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (orch, _) = scripted(dir.path(), responder(18));
    orch.run(&two_stage(), inputs(&[("letter", "x")]), RunParams::new("m"), opts("r"))
        .unwrap();
    orch.resolve_checkpoint("r", Decision::edit("schema", "ana", schema_json(17)))
        .unwrap();
    let st = orch.resume("r", None).unwrap();
    let events = orch.store().read("r").unwrap();
    let replayed = replay_run(&events).unwrap();
    for (stage, slots) in &st.artifacts {
        for (slot, a) in slots {
            assert_eq!(replayed.get(&(stage.clone(), *slot)), Some(a), "{stage}/{slot}");
        }
    }
    assert!(matches!(
        replayed[&("schema".to_string(), 0)],
        Artifact::ElementsSchema { ref schema } if schema.elements.len() == 17
    ));
    assert!(replay_run(&[]).unwrap().is_empty());
    let mut gap = events.clone();
    gap.remove(2);
    assert_eq!(replay_run(&gap).unwrap_err().code(), "corrupt-audit");
}

#[test]
fn killed_run_resumes_only_missing_slots() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = stage("ev", "Evidence {letter}", &[], ContractKind::EvidenceList);
    s.runs = 10;
    let spec = spec("k", vec![s], &[]);
    let (orch, transport) = scripted(dir.path(), |_| "<evidence>q</evidence>".to_string());
    orch.run(&spec, inputs(&[("letter", "x")]), RunParams::new("m"), opts("r"))
        .unwrap();
    assert_eq!(transport.calls(), 10);

    // simulate a kill: keep run-started plus the first four call/parse pairs,
    // and one call whose parse never landed
    let path = orch.store().path("r");
    let text = std::fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().take(1 + 8 + 1).collect();
    std::fs::write(&path, kept.join("\n") + "\n").unwrap();
    let before = orch.state("r").unwrap();
    let called: std::collections::BTreeSet<u32> = before.calls.keys().map(|(_, s)| *s).collect();
    assert_eq!(called.len(), 5);

    let (orch2, transport2) = {
        let t = Arc::new(ScriptedTransport::text(|_| "<evidence>q</evidence>".to_string()));
        let gw = Gateway::new(Arc::new(Cassette::in_memory(CassetteMode::Record)), t.clone());
        (Orchestrator::new(orch.store().clone(), gw), t)
    };
    let st = orch2.resume("r", None).unwrap();
    assert!(st.is_complete());
    assert_eq!(transport2.calls(), 5);
    assert_eq!(st.artifacts["ev"].len(), 10);
    let events = orch2.store().read("r").unwrap();
    let calls_after: Vec<u32> = events[10..]
        .iter()
        .filter_map(|e| match &e.payload {
            EventPayload::Call { slot, .. } => Some(*slot),
            _ => None,
        })
        .collect();
    assert!(calls_after.iter().all(|s| !called.contains(s)), "{calls_after:?}");
}
