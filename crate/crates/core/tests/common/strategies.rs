//! Proptest generators shared by several targets.

use leash_core::codec::TaggedReport;
use proptest::prelude::*;

pub fn phrase() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9 ,.;:-]{0,40}[A-Za-z0-9.]"
}

pub fn report() -> impl Strategy<Value = TaggedReport> {
    (phrase(), 0i64..=10)
        .prop_flat_map(|(explanation, score)| {
            let min = usize::from(score > 0);
            (Just(explanation), prop::collection::vec(phrase(), min..5), Just(score))
        })
        .prop_map(|(explanation, quotations, score)| TaggedReport {
            explanation,
            quotations,
            score,
        })
}

pub fn tag_soup() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec![
            "<e>", "</e>", "<e", "e>", "x", " ", "\n", "é", "<", "/", "<ev>", "</ev>",
        ]),
        0..40,
    )
    .prop_map(|parts| parts.concat())
}
