mod common;

use common::gates::{check_gate_case, gate_cases, kill_and_resume};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn no_successor_runs_before_its_gate(case in gate_cases()) {
        prop_assert_eq!(check_gate_case(&case), Ok(()));
    }
}

#[test]
fn resume_calls_exactly_the_missing_slots() {
    let after = kill_and_resume().unwrap();
    assert_eq!(after, vec![5, 6, 7, 8, 9]);
}
