use std::sync::Arc;

use leash_core::gateway::{
    Cassette, CassetteMode, CompletionRequest, Gateway, GatewayError, RetryPolicy, ScriptedTransport, TransportError,
};
use leash_core::model::RunParams;

fn req(prompt: &str) -> CompletionRequest {
    CompletionRequest::user(RunParams::new("m"), prompt)
}

#[test]
fn file_cassette_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let transport = Arc::new(ScriptedTransport::new(|r: &CompletionRequest| {
        if r.prompt_text() == "fail" {
            Err(TransportError::Status {
                status: 400,
                body: "bad prompt".into(),
            })
        } else {
            Ok(leash_core::gateway::CompletionResponse::text(format!(
                "{} #{}",
                r.prompt_text(),
                r.attempt
            )))
        }
    }));
    {
        let gw = Gateway::new(
            Arc::new(Cassette::open(&path, CassetteMode::Record).unwrap()),
            transport.clone(),
        )
        .with_retry(RetryPolicy::no_delay());
        let got: Vec<_> = gw
            .fan_out(&req("hello"), 3)
            .into_iter()
            .map(|r| r.unwrap().text)
            .collect();
        assert_eq!(got, vec!["hello #1", "hello #2", "hello #3"]);
        assert!(gw.complete(&req("fail")).is_err());
    }
    let calls = transport.calls();

    let replay = Gateway::replay(Arc::new(Cassette::open(&path, CassetteMode::Replay).unwrap()));
    assert_eq!(replay.complete(&req("hello").with_attempt(2)).unwrap().text, "hello #2");
    match replay.complete(&req("fail")) {
        Err(GatewayError::ProviderError { status, body }) => {
            assert_eq!((status, body.as_str()), (Some(400), "bad prompt"))
        }
        other => panic!("{other:?}"),
    }
    match replay.complete(&req("hello").with_attempt(4)) {
        Err(e) => assert_eq!(e.code(), "replay-miss"),
        Ok(r) => panic!("unexpected {r:?}"),
    }
    assert_eq!(transport.calls(), calls);
}

#[test]
fn keys_separate_attempts_and_params() {
    let a = req("x");
    assert_eq!(a.idempotency_key(), req("x").idempotency_key());
    assert_ne!(a.idempotency_key(), req("x").with_attempt(2).idempotency_key());
    assert_eq!(a.request_digest(), req("x").with_attempt(2).request_digest());
    let other = CompletionRequest::user(RunParams::new("n"), "x");
    assert_ne!(a.idempotency_key(), other.idempotency_key());
}

#[test]
fn replay_of_a_missing_cassette_fails_to_open() {
    let dir = tempfile::tempdir().unwrap();
    assert!(Cassette::open(dir.path().join("none.jsonl"), CassetteMode::Replay).is_err());
}
