use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementDelta {
    pub element: String,
    pub a: i64,
    pub b: i64,
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concordance {
    /// In the order of the first score list.
    pub per_element: Vec<ElementDelta>,
    pub max_delta: i64,
}

/// Per-element absolute score differences. Both lists must cover the same keys.
pub fn concordance(a: &[(String, i64)], b: &[(String, i64)]) -> Result<Concordance, HarnessError> {
    let ka: BTreeSet<&str> = a.iter().map(|(k, _)| k.as_str()).collect();
    let kb: BTreeSet<&str> = b.iter().map(|(k, _)| k.as_str()).collect();
    if ka != kb || ka.len() != a.len() || kb.len() != b.len() {
        return Err(HarnessError::KeyMismatch {
            only_a: ka.difference(&kb).map(|s| s.to_string()).collect(),
            only_b: kb.difference(&ka).map(|s| s.to_string()).collect(),
        });
    }
    let per_element: Vec<ElementDelta> = a
        .iter()
        .map(|(k, sa)| {
            let sb = b
                .iter()
                .find(|(kb, _)| kb == k)
                .map(|(_, s)| *s)
                .expect("key sets match");
            ElementDelta {
                element: k.clone(),
                a: *sa,
                b: sb,
                delta: (sa - sb).abs(),
            }
        })
        .collect();
    let max_delta = per_element.iter().map(|d| d.delta).max().unwrap_or(0);
    Ok(Concordance { per_element, max_delta })
}

/// `element,score_a,score_b,delta`
pub fn concordance_csv(c: &Concordance) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["element", "score_a", "score_b", "delta"])
        .expect("write to memory");
    for d in &c.per_element {
        w.write_record([d.element.clone(), d.a.to_string(), d.b.to_string(), d.delta.to_string()])
            .expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
