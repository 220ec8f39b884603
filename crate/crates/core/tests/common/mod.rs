#![allow(dead_code)]

pub mod gates;
pub mod oracles;
pub mod strategies;

use std::collections::BTreeMap;
use std::sync::Arc;

use leash_core::codec::{Element, ElementSchema};
use leash_core::gateway::{Cassette, CassetteMode, CompletionRequest, Gateway, RetryPolicy, ScriptedTransport};
use leash_core::model::{ContractKind, Edge, OutputContract, PipelineSpec, PromptTemplate, Stage, StageKind};
use leash_core::orchestrator::{AuditStore, Orchestrator};

pub fn stage(id: &str, text: &str, sources: &[(&str, &str)], kind: ContractKind) -> Stage {
    let mut s = Stage::new(
        id,
        StageKind::Apply,
        PromptTemplate::new(text).unwrap(),
        OutputContract::new(kind),
    );
    for (k, v) in sources {
        s.sources.insert(k.to_string(), v.to_string());
    }
    s
}

pub fn spec(id: &str, stages: Vec<Stage>, edges: &[(&str, &str)]) -> PipelineSpec {
    PipelineSpec {
        id: id.into(),
        metadata: BTreeMap::new(),
        stages,
        edges: edges
            .iter()
            .map(|(a, b)| Edge {
                from: a.to_string(),
                to: b.to_string(),
            })
            .collect(),
        report: None,
    }
}

pub fn inputs(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

pub fn schema_json(n: usize) -> String {
    let schema = ElementSchema {
        elements: (0..n)
            .map(|i| Element::new(format!("e{i:02}"), format!("Element {i}")))
            .collect(),
    };
    schema.to_canonical_json()
}

pub fn report_text(score: i64) -> String {
    format!("<explanation>because</explanation>\n<quotations><quote1>the text</quote1></quotations>\n<score>{score}</score>")
}

/// Orchestrator in record mode over a scripted transport, with its transport handle.
pub fn scripted<F>(dir: &std::path::Path, f: F) -> (Orchestrator, Arc<ScriptedTransport>)
where
    F: Fn(&CompletionRequest) -> String + Send + Sync + 'static,
{
    let transport = Arc::new(ScriptedTransport::text(f));
    let gw = Gateway::new(Arc::new(Cassette::in_memory(CassetteMode::Record)), transport.clone())
        .with_retry(RetryPolicy::no_delay());
    let store = AuditStore::new(dir.join("audit")).unwrap();
    (Orchestrator::new(store, gw), transport)
}

pub fn fixtures() -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture(rel: &str) -> String {
    let p = fixtures().join(rel);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub fn fixture_params() -> leash_core::model::RunParams {
    toml::from_str(&fixture("params.toml")).unwrap()
}

/// Replay-only orchestrator over a shipped cassette; any cache miss is an error.
pub fn replaying(dir: &std::path::Path, cassette: &str) -> Orchestrator {
    let c = Cassette::open(fixtures().join(cassette), CassetteMode::Replay).unwrap();
    let store = AuditStore::new(dir.join("audit")).unwrap();
    Orchestrator::new(store, Gateway::replay(Arc::new(c)))
}

/// Replays a shipped regime cassette with auto-approval. Returns the report
/// and the run's artifact map serialized as JSON.
pub fn replay_regime(regime: leash_core::harness::Regime) -> (leash_core::harness::RegimeReport, String) {
    use leash_core::harness::{run_regime, ApprovalPolicy, RegimeOutcome, SchemaSeed};
    let tmp = tempfile::tempdir().unwrap();
    let orch = replaying(tmp.path(), &format!("exp2/{regime}.jsonl"));
    let seed = SchemaSeed::Corpus(fixture("seed.txt"));
    let out = run_regime(
        &orch,
        regime,
        &fixture("letter.txt"),
        Some(&seed),
        &fixture_params(),
        ApprovalPolicy::AutoApprove,
        regime.as_str(),
    )
    .unwrap();
    let artifacts = serde_json::to_string(&orch.state(regime.as_str()).unwrap().artifacts).unwrap();
    match out {
        RegimeOutcome::Complete(r) => (r, artifacts),
        other => panic!("{regime}: {other:?}"),
    }
}

#[derive(serde::Deserialize)]
pub struct AnswerFixture {
    /// Violation code the fixture must raise; `None` for valid answers.
    pub expect: Option<String>,
    pub item: String,
    pub answer: leash_core::codebook::Answer,
}

pub fn answer_fixtures() -> Vec<(String, AnswerFixture)> {
    let dir = fixtures().join("codebook/answers");
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (
                name,
                serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap(),
            )
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}
