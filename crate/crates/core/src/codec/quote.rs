//! Verbatim-quote checking with ellipsis elision.

use serde::{Deserialize, Serialize};

/// Byte span into the original (unnormalized) source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuoteCheck {
    pub quote: String,
    pub verified: bool,
    /// One span per matched segment; shorter than the segment list when unverified.
    pub segments: Vec<Span>,
}

const QUOTE_PAIRS: &[(char, char)] = &[
    ('"', '"'),
    ('\'', '\''),
    ('\u{201c}', '\u{201d}'),
    ('\u{2018}', '\u{2019}'),
    ('\u{ab}', '\u{bb}'),
];

/// Removes one pair of enclosing quotation marks, if present.
pub fn strip_enclosing_quotes(s: &str) -> &str {
    let t = s.trim();
    for &(open, close) in QUOTE_PAIRS {
        if t.len() >= open.len_utf8() + close.len_utf8() && t.starts_with(open) && t.ends_with(close) {
            return t[open.len_utf8()..t.len() - close.len_utf8()].trim();
        }
    }
    t
}

/// Splits a quote on `...` or `…`, dropping empty pieces.
pub fn quote_segments(quote: &str) -> Vec<String> {
    strip_enclosing_quotes(quote)
        .replace('\u{2026}', "...")
        .split("...")
        .map(normalize)
        .filter(|s| !s.is_empty())
        .collect()
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_ascii_lowercase()
}

/// Normalized source text plus, for every normalized byte, its offset in the original.
struct Normalized {
    text: String,
    origin: Vec<usize>,
}

fn normalize_with_map(src: &str) -> Normalized {
    let mut text = String::with_capacity(src.len());
    let mut origin = Vec::with_capacity(src.len());
    let mut in_space = false;
    for (i, c) in src.char_indices() {
        if c.is_whitespace() {
            if !in_space {
                text.push(' ');
                origin.push(i);
                in_space = true;
            }
            continue;
        }
        in_space = false;
        let lc = c.to_ascii_lowercase();
        for _ in 0..lc.len_utf8() {
            origin.push(i);
        }
        text.push(lc);
    }
    Normalized { text, origin }
}

/// Checks that every ellipsis-separated segment of `quote` occurs in `source`,
/// in order and without overlap, after whitespace and ASCII-case normalization.
pub fn verify_quote(quote: &str, source: &str) -> QuoteCheck {
    let segs = quote_segments(quote);
    let norm = normalize_with_map(source);
    let mut spans = Vec::with_capacity(segs.len());
    let mut pos = 0;
    let mut verified = !segs.is_empty();
    for seg in &segs {
        match norm.text[pos..].find(seg.as_str()) {
            Some(rel) => {
                let s = pos + rel;
                let e = s + seg.len();
                let last = norm.origin[e - 1];
                let last_len = source[last..].chars().next().map_or(1, char::len_utf8);
                spans.push(Span {
                    start: norm.origin[s],
                    end: last + last_len,
                });
                pos = e;
            }
            None => {
                verified = false;
                break;
            }
        }
    }
    QuoteCheck {
        quote: quote.to_string(),
        verified,
        segments: spans,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "Keep the ledgers open,\n  let the clerks answer to the council. Sealed books breed suspicion.";

    #[test]
    fn full_match() {
        let c = verify_quote(SRC, SRC);
        assert!(c.verified);
        assert_eq!(
            c.segments,
            vec![Span {
                start: 0,
                end: SRC.len()
            }]
        );
    }

    #[test]
    fn in_order_ellipsis() {
        let c = verify_quote("\"Keep the ledgers ... answer to the council\"", SRC);
        assert!(c.verified);
        assert_eq!(&SRC[c.segments[1].start..c.segments[1].end], "answer to the council");
        assert!(verify_quote("Keep the ledgers \u{2026} breed suspicion.", SRC).verified);
    }

    #[test]
    fn reversed_segments_rejected() {
        assert!(!verify_quote("answer to the council ... Keep the ledgers", SRC).verified);
    }

    #[test]
    fn whitespace_is_collapsed() {
        let c = verify_quote("open, let the clerks", SRC);
        assert!(c.verified);
        assert_eq!(&SRC[c.segments[0].start..c.segments[0].end], "open,\n  let the clerks");
    }

    #[test]
    fn empty_quote_not_verified() {
        assert!(!verify_quote(" ... ", SRC).verified);
    }
}
