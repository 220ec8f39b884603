use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn pipelines() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/pipelines")
}

/// `leash` in `dir` with no inherited LEASH_* settings.
fn leash(dir: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_leash"));
    c.current_dir(dir);
    for (k, _) in std::env::vars() {
        if k.starts_with("LEASH_") {
            c.env_remove(k);
        }
    }
    c
}

fn run(c: &mut Command) -> Output {
    c.output().expect("spawn leash")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// The machine-readable error line printed last on stderr.
fn error_line(o: &Output) -> serde_json::Value {
    let err = String::from_utf8(o.stderr.clone()).unwrap();
    let last = err
        .lines()
        .last()
        .unwrap_or_else(|| panic!("no stderr; stdout: {}", stdout(o)));
    serde_json::from_str(last).unwrap_or_else(|e| panic!("{e}: {last}"))
}

fn with_params(c: &mut Command) -> &mut Command {
    c.arg("--params").arg(fixtures().join("params.toml"))
}

#[test]
fn validate_accepts_bundled_and_rejects_broken() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["baseline", "two-stage", "multi-stage", "coding"] {
        let o = run(leash(dir.path())
            .arg("validate")
            .arg(pipelines().join(format!("{name}.toml"))));
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
        assert_eq!(v["ok"], true);
    }
    let broken = dir.path().join("broken.toml");
    std::fs::write(
        &broken,
        "id = \"x\"\n[[stages]]\nid = \"a\"\nkind = \"extract\"\ncontract = { kind = \"free-text\" }\n\
         [stages.template]\ntext = \"{missing}\"\n[[edges]]\nfrom = \"a\"\nto = \"nowhere\"\n",
    )
    .unwrap();
    let o = run(leash(dir.path()).arg("validate").arg(&broken));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["code"], "invalid-spec");
}

#[test]
fn exp1_replay_reproduces_grid_byte_for_byte() {
    let go = || {
        let dir = tempfile::tempdir().unwrap();
        let o = run(with_params(&mut leash(dir.path()))
            .arg("--cassette")
            .arg(fixtures().join("exp1/cassette.jsonl"))
            .args(["exp1", "--grid"])
            .arg(fixtures().join("exp1/config.toml"))
            .arg("--letter")
            .arg(fixtures().join("letter.txt")));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    let first = go();
    assert!(first.contains("1-10 / Yes,0.16,1.13,49,50"), "{first}");
    assert!(first.contains("0-10 / Yes,0.00,0.00,50,50"), "{first}");
    assert_eq!(first, go());
}

#[test]
fn replay_miss_exits_with_provider_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(with_params(&mut leash(dir.path()))
        .arg("--cassette")
        .arg(fixtures().join("exp2/baseline.jsonl"))
        .args(["exp1", "--grid"])
        .arg(fixtures().join("exp1/config.toml"))
        .arg("--letter")
        .arg(fixtures().join("letter.txt")));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(error_line(&o)["code"], "replay-miss");
}

#[test]
fn exp2_compare_prints_concordance() {
    let dir = tempfile::tempdir().unwrap();
    let mut both = std::fs::read_to_string(fixtures().join("exp2/two-stage.jsonl")).unwrap();
    both.push_str(&std::fs::read_to_string(fixtures().join("exp2/multi-stage.jsonl")).unwrap());
    std::fs::write(dir.path().join("both.jsonl"), both).unwrap();
    let o = run(with_params(&mut leash(dir.path()))
        .args([
            "--cassette",
            "both.jsonl",
            "exp2",
            "--regime",
            "two-stage",
            "--compare",
            "multi-stage",
        ])
        .arg("--auto-approve")
        .arg("--letter")
        .arg(fixtures().join("letter.txt"))
        .arg("--schema")
        .arg(fixtures().join("exp2/schema.json")));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("amendment,2,0,2"), "{out}");
}

#[test]
fn checkpoint_review_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let cassette = fixtures().join("exp2/two-stage.jsonl");
    let o = run(with_params(&mut leash(dir.path()))
        .arg("--cassette")
        .arg(&cassette)
        .args(["exp2", "--regime", "two-stage", "--letter"])
        .arg(fixtures().join("letter.txt"))
        .arg("--seed")
        .arg(fixtures().join("seed.txt")));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let halted: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(halted["status"], "awaiting-approval");
    assert_eq!(halted["stage"], "schema");

    let o = run(leash(dir.path()).args(["checkpoints", "list"]));
    let pending: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(pending[0]["run_id"], "exp2-two-stage");
    assert_eq!(pending[0]["stage"], "schema");

    let approve = |dir: &Path| {
        run(with_params(&mut leash(dir)).arg("--cassette").arg(&cassette).args([
            "checkpoints",
            "approve",
            "exp2-two-stage",
            "--note",
            "looks right",
        ]))
    };
    let o = approve(dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let done: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(done["status"]["state"], "complete");
    assert_eq!(done["stage_states"]["schema"], "approved");

    // nothing is pending any more
    let o = approve(dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_line(&o)["code"], "not-awaiting");
    let o = run(leash(dir.path()).args(["checkpoints", "list"]));
    assert_eq!(stdout(&o).trim(), "[]");
}

#[test]
fn rejected_edit_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(with_params(&mut leash(dir.path()))
        .arg("--cassette")
        .arg(fixtures().join("exp2/two-stage.jsonl"))
        .args(["exp2", "--regime", "two-stage", "--letter"])
        .arg(fixtures().join("letter.txt"))
        .arg("--seed")
        .arg(fixtures().join("seed.txt")));
    assert!(o.status.success());
    std::fs::write(dir.path().join("bad.json"), "{\"dimensions\": []}").unwrap();
    let o = run(leash(dir.path()).args([
        "checkpoints",
        "edit",
        "exp2-two-stage",
        "--artifact",
        "bad.json",
        "--no-resume",
    ]));
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(error_line(&o)["code"], "contract-violation");
    // still awaiting
    let o = run(leash(dir.path()).args(["checkpoints", "list"]));
    assert!(stdout(&o).contains("exp2-two-stage"));
}

#[test]
fn audit_dir_precedence_is_flag_then_env_then_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("leash.toml"), "audit_dir = \"from-file\"\n").unwrap();
    let start = |c: &mut Command| {
        let o = run(with_params(c)
            .arg("--cassette")
            .arg(fixtures().join("exp2/two-stage.jsonl"))
            .args(["exp2", "--regime", "two-stage", "--letter"])
            .arg(fixtures().join("letter.txt"))
            .arg("--seed")
            .arg(fixtures().join("seed.txt")));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    start(&mut leash(dir.path()));
    assert!(dir.path().join("from-file").is_dir());
    start(leash(dir.path()).env("LEASH_AUDIT_DIR", "from-env"));
    assert!(dir.path().join("from-env").is_dir());
    start(
        leash(dir.path())
            .env("LEASH_AUDIT_DIR", "from-env-2")
            .args(["--audit-dir", "from-flag"]),
    );
    assert!(dir.path().join("from-flag").is_dir());
    assert!(!dir.path().join("from-env-2").exists());
}

#[test]
fn live_mode_without_credentials_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(with_params(&mut leash(dir.path()))
        .args([
            "--mode",
            "live",
            "--provider",
            "openai",
            "--base-url",
            "http://127.0.0.1:9",
        ])
        .args(["--credential-env", "LEASH_TEST_KEY_THAT_IS_NOT_SET", "exp1", "--grid"])
        .arg(fixtures().join("exp1/config.toml"))
        .arg("--letter")
        .arg(fixtures().join("letter.txt")));
    assert_eq!(o.status.code(), Some(5));
    assert_eq!(error_line(&o)["code"], "config");

    let o = run(leash(dir.path()).args(["--max-in-flight", "0", "checkpoints", "list"]));
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn coding_indices_and_plane() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(with_params(&mut leash(dir.path()))
        .arg("--cassette")
        .arg(fixtures().join("codebook/coding/cassette.jsonl"))
        .arg("code-corpus")
        .arg(fixtures().join("codebook/coding/manifest.csv"))
        .args(["--out", "coded"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert_eq!(rows[0]["runs"], 5);
    for id in ["W1", "W2"] {
        let d = dir.path().join("coded").join(id);
        assert!(d.join("consensus.json").is_file());
        assert!(d.join("run-5.json").is_file());
    }

    let o = run(leash(dir.path()).args(["indices", "coded"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["records"].as_array().unwrap().len(), 2);
    assert_eq!(v["correlations"].as_array().unwrap().len(), 3);

    let o = run(leash(dir.path()).arg("plane").arg(fixtures().join("codebook/corpus")));
    let plane = stdout(&o);
    let lines: Vec<_> = plane.lines().collect();
    assert_eq!(lines.len(), 57);
    assert_eq!(lines[0], "id,depth,autonomy,reproducibility");
    assert!(lines[1].starts_with("P000,"));

    let o = run(leash(dir.path()).args(["indices", "coded-nowhere"]));
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn serve_answers_the_control_api() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = leash(dir.path())
        .args(["serve", "--port", "0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .unwrap_or_else(|| panic!("{line}"))
        .to_string();
    let mut s = TcpStream::connect(&addr).unwrap();
    write!(
        s,
        "GET /api/v1/runs HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.trim_end().ends_with("[]"), "{resp}");
}
