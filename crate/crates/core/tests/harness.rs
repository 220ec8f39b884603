mod common;

use std::time::Instant;

use common::oracles::{rel_close, welford};
use leash_core::harness::{
    concordance, run_abstention_grid, standard_grid, summarize_counts, Exp1Config, HarnessError, ABSTENTION_SENTENCE,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[test]
fn summarize_counts_worked_cells() {
    let mut counts = vec![0i64; 49];
    counts.push(8);
    let s = summarize_counts(&counts).unwrap();
    assert_eq!(format!("{:.2}/{:.2}", s.mean, s.sd), "0.16/1.13");
    assert_eq!(s.zero_runs, 49);

    let z = summarize_counts(&[0; 50]).unwrap();
    assert_eq!((z.mean, z.sd, z.zero_runs), (0.0, 0.0, 50));
    assert!(matches!(summarize_counts(&[]), Err(HarnessError::EmptyInput)));
}

#[test]
fn summarize_counts_agrees_with_welford() {
    let mut rng = StdRng::seed_from_u64(10_000);
    let started = Instant::now();
    for _ in 0..10_000 {
        let n = rng.random_range(1..=200);
        let hi = rng.random_range(0..=60);
        let xs: Vec<i64> = (0..n).map(|_| rng.random_range(0..=hi)).collect();
        let s = summarize_counts(&xs).unwrap();
        let (mean, sd) = welford(&xs);
        assert!(rel_close(s.mean, mean, 1e-9), "{xs:?}");
        assert!(rel_close(s.sd, sd, 1e-9), "{xs:?}");
        assert_eq!(s.zero_runs, xs.iter().filter(|&&x| x == 0).count());
    }
    assert!(started.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn grid_prompts_differ_only_in_range_and_marker() {
    let config = Exp1Config::from_toml_str(&common::fixture("exp1/config.toml")).unwrap();
    let letter = common::fixture("letter.txt");
    let mut canonical = Vec::new();
    for cond in standard_grid(50) {
        let p = config.prompt(&cond, &letter).unwrap();
        let range = cond.range_phrase();
        assert_eq!(p.matches(&range).count(), 1, "{}", cond.label());
        assert_eq!(p.contains(ABSTENTION_SENTENCE), cond.abstention_enabled);
        // the sentence goes on its own line
        let marker_line = format!("\n{ABSTENTION_SENTENCE}");
        canonical.push(p.replacen(&range, "", 1).replacen(&marker_line, "", 1));
    }
    assert!(canonical.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn exp1_cassette_replays_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let orch = common::replaying(tmp.path(), "exp1/cassette.jsonl");
    let config = Exp1Config::from_toml_str(&common::fixture("exp1/config.toml")).unwrap();
    let cells = run_abstention_grid(
        &orch,
        &common::fixture("letter.txt"),
        &config,
        &common::fixture_params(),
        "exp1",
    )
    .unwrap();
    let got: Vec<String> = cells
        .iter()
        .map(|c| {
            format!(
                "{} {:.2}/{:.2} z{}",
                c.condition.label(),
                c.stats.mean,
                c.stats.sd,
                c.stats.zero_runs
            )
        })
        .collect();
    assert_eq!(got[1], "1-10 / Yes 0.16/1.13 z49");
    assert_eq!(got[3], "0-10 / Yes 0.00/0.00 z50");
    assert!(cells.iter().all(|c| c.stats.runs() == 50 && c.failed_slots.is_empty()));
    assert_eq!(cells[1].abstained_runs, 49);
}

#[test]
fn concordance_rejects_mismatched_keys() {
    let a = vec![("x".to_string(), 1), ("y".to_string(), 2)];
    let b = vec![("x".to_string(), 3), ("z".to_string(), 2)];
    assert!(matches!(concordance(&a, &b), Err(HarnessError::KeyMismatch { .. })));
    let c = concordance(&a, &[("y".to_string(), 0), ("x".to_string(), 1)]).unwrap();
    assert_eq!(c.max_delta, 2);
}
