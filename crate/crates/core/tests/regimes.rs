mod common;

use leash_core::harness::{
    concordance, concordance_csv, run_regime, ApprovalPolicy, Regime, RegimeOutcome, SchemaSeed,
};
use leash_core::orchestrator::pending_checkpoints;

#[test]
fn multi_stage_replays_are_identical() {
    let (r1, a1) = common::replay_regime(Regime::MultiStage);
    let (r2, a2) = common::replay_regime(Regime::MultiStage);
    assert_eq!(a1, a2);
    assert_eq!(r1.scores(), r2.scores());
    assert_eq!(r1.scores().len(), 17);
    assert!(r1.synthesis.is_some());
}

#[test]
fn halting_policy_stops_at_the_schema_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let orch = common::replaying(tmp.path(), "exp2/two-stage.jsonl");
    let out = run_regime(
        &orch,
        Regime::TwoStage,
        &common::fixture("letter.txt"),
        Some(&SchemaSeed::Corpus(common::fixture("seed.txt"))),
        &common::fixture_params(),
        ApprovalPolicy::Halt,
        "held",
    )
    .unwrap();
    assert!(matches!(out, RegimeOutcome::Halted { .. }), "{out:?}");
    let pending = pending_checkpoints(orch.store()).unwrap();
    assert_eq!(pending.len(), 1);
    assert_eq!(pending[0].stage, "schema");
}

#[test]
fn baseline_has_no_scores_but_a_synthesis() {
    let (r, _) = common::replay_regime(Regime::Baseline);
    assert!(r.scores().is_empty());
    assert!(r.synthesis.unwrap().contains("1."));
}

/// Per-element score pairs, keyed as in the shipped schema.
const EXPECTED: [(&str, i64, i64); 17] = [
    ("legal-limits", 9, 9),
    ("sovereignty", 8, 9),
    ("entrenchment", 7, 7),
    ("writtenness", 9, 9),
    ("allocation", 9, 8),
    ("supremacy", 8, 9),
    ("rights", 8, 8),
    ("procedural", 9, 9),
    ("jurisdictional", 6, 8),
    ("amendment", 2, 0),
    ("interpretation", 8, 9),
    ("conventions", 7, 8),
    ("due-process", 8, 8),
    ("consent", 3, 2),
    ("stability", 7, 8),
    ("abstract-commitments", 9, 9),
    ("remedies", 8, 7),
];

#[test]
fn two_and_multi_stage_concordance() {
    let (two, _) = common::replay_regime(Regime::TwoStage);
    let (multi, _) = common::replay_regime(Regime::MultiStage);
    let c = concordance(&two.scores(), &multi.scores()).unwrap();
    assert_eq!(c.per_element.len(), 17);
    for (d, (key, a, b)) in c.per_element.iter().zip(EXPECTED) {
        assert_eq!((d.element.as_str(), d.a, d.b), (key, a, b));
        assert_eq!(d.delta, (a - b).abs());
    }
    assert_eq!(c.max_delta, 2);
    let csv = concordance_csv(&c);
    assert!(csv.starts_with("element,score_a,score_b,delta\n"));
    assert!(csv.contains("amendment,2,0,2"));
}
