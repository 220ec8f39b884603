//! Three-pass relevance screening and primary-use selection.

use std::cmp::Reverse;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCREENING_PASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Relevant,
    NotRelevant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningPass {
    pub model: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningRecord {
    pub record_id: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub passes: Vec<ScreeningPass>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScreenError {
    #[error("pass-count-mismatch: record {record_id} has {passes} passes, expected {SCREENING_PASSES}")]
    PassCountMismatch { record_id: String, passes: usize },
}

/// Ids of records judged relevant by all three passes.
pub fn screen(records: &[ScreeningRecord]) -> Result<BTreeSet<String>, ScreenError> {
    if let Some(bad) = records.iter().find(|r| r.passes.len() != SCREENING_PASSES) {
        return Err(ScreenError::PassCountMismatch {
            record_id: bad.record_id.clone(),
            passes: bad.passes.len(),
        });
    }
    Ok(records
        .iter()
        .filter(|r| r.passes.iter().all(|p| p.verdict == Verdict::Relevant))
        .map(|r| r.record_id.clone())
        .collect())
}

/// One candidate LLM use within a paper.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UseCandidate {
    pub label: String,
    pub generative: bool,
    /// 0-3.
    pub autonomy: u8,
    /// 1-5.
    pub depth: u8,
    /// Larger means more data processed.
    pub data_volume: u64,
    /// Order of first mention in the methods section; lower is earlier.
    pub methods_position: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrimaryUseError {
    #[error("no-generative-candidate")]
    NoGenerativeCandidate,
}

/// Picks the use to code: generative only, then highest autonomy, depth and
/// data volume, then earliest methods position.
pub fn select_primary_use(candidates: &[UseCandidate]) -> Result<UseCandidate, PrimaryUseError> {
    candidates
        .iter()
        .filter(|c| c.generative)
        .max_by_key(|c| {
            (
                c.autonomy,
                c.depth,
                c.data_volume,
                Reverse(c.methods_position),
                Reverse(c.label.as_str()),
            )
        })
        .cloned()
        .ok_or(PrimaryUseError::NoGenerativeCandidate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(label: &str, generative: bool, autonomy: u8, depth: u8, pos: u32) -> UseCandidate {
        UseCandidate {
            label: label.into(),
            generative,
            autonomy,
            depth,
            data_volume: 1,
            methods_position: pos,
        }
    }

    #[test]
    fn tie_breakers() {
        let emb = cand("embed", false, 3, 5, 1);
        let gen = cand("gen", true, 0, 1, 9);
        assert_eq!(select_primary_use(&[emb.clone(), gen.clone()]).unwrap(), gen);
        let deep = cand("deep", true, 2, 4, 5);
        let shallow = cand("shallow", true, 2, 3, 1);
        assert_eq!(select_primary_use(&[shallow, deep.clone()]).unwrap(), deep);
        let late = cand("late", true, 1, 1, 7);
        let early = cand("early", true, 1, 1, 2);
        assert_eq!(select_primary_use(&[late, early.clone()]).unwrap(), early);
        assert_eq!(select_primary_use(&[emb]), Err(PrimaryUseError::NoGenerativeCandidate));
    }

    #[test]
    fn fourth_pass_rejected() {
        let pass = |v| ScreeningPass {
            model: "m".into(),
            verdict: v,
        };
        let rec = ScreeningRecord {
            record_id: "r".into(),
            abstract_text: String::new(),
            passes: vec![pass(Verdict::Relevant); 4],
        };
        assert!(matches!(
            screen(&[rec]),
            Err(ScreenError::PassCountMismatch { passes: 4, .. })
        ));
    }
}
