//! Element reports: `<explanation>`, `<quotations>` with `<quoteN>`, `<score>`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::blocks::extract_blocks;
use crate::model::{IntRange, OutputContract};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedReport {
    pub explanation: String,
    pub quotations: Vec<String>,
    pub score: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code", rename_all = "kebab-case")]
pub enum ReportError {
    #[error("missing-explanation: no non-empty <explanation> block")]
    MissingExplanation,
    #[error("missing-score: no <score> block")]
    MissingScore,
    #[error("non-integer-score: `{value}` is not an integer")]
    NonIntegerScore { value: String },
    #[error("score-out-of-range: {value} outside {range}")]
    ScoreOutOfRange { value: i64, range: IntRange },
    #[error("missing-quotations: score {score} given without supporting quotations")]
    MissingQuotations { score: i64 },
    #[error("no-reports: response contains no element report")]
    NoReports,
}

impl ReportError {
    pub fn code(&self) -> &'static str {
        match self {
            ReportError::MissingExplanation => "missing-explanation",
            ReportError::MissingScore => "missing-score",
            ReportError::NonIntegerScore { .. } => "non-integer-score",
            ReportError::ScoreOutOfRange { .. } => "score-out-of-range",
            ReportError::MissingQuotations { .. } => "missing-quotations",
            ReportError::NoReports => "no-reports",
        }
    }
}

/// `<quoteN>…</quoteN>` blocks in `text`, ordered by N (stable for repeats).
fn numbered_quotes(text: &str) -> Vec<String> {
    let mut found: Vec<(u32, usize, String)> = Vec::new();
    let mut pos = 0;
    while let Some(rel) = text[pos..].find("<quote") {
        let at = pos + rel + "<quote".len();
        let digits: String = text[at..].chars().take_while(|c| c.is_ascii_digit()).collect();
        let after = at + digits.len();
        pos = after;
        if digits.is_empty() || !text[after..].starts_with('>') {
            continue;
        }
        let Ok(n) = digits.parse::<u32>() else { continue };
        let body = after + 1;
        let close = format!("</quote{digits}>");
        if let Some(crel) = text[body..].find(&close) {
            let q = text[body..body + crel].trim();
            if !q.is_empty() {
                found.push((n, body, q.to_string()));
            }
            pos = body + crel + close.len();
        }
    }
    found.sort_by_key(|(n, at, _)| (*n, *at));
    found.into_iter().map(|(_, _, q)| q).collect()
}

/// Parses one element report against the contract's score range.
pub fn parse_element_report(text: &str, contract: &OutputContract) -> Result<TaggedReport, ReportError> {
    parse_with_range(text, contract.score_range())
}

fn parse_with_range(text: &str, range: IntRange) -> Result<TaggedReport, ReportError> {
    let explanation = extract_blocks(text, "explanation")
        .blocks
        .into_iter()
        .map(|b| b.content.trim().to_string())
        .find(|s| !s.is_empty())
        .ok_or(ReportError::MissingExplanation)?;
    let raw_score = extract_blocks(text, "score")
        .blocks
        .into_iter()
        .next()
        .ok_or(ReportError::MissingScore)?
        .content;
    let raw_score = raw_score.trim();
    let score: i64 = raw_score.parse().map_err(|_| ReportError::NonIntegerScore {
        value: raw_score.to_string(),
    })?;
    if !range.contains(score) {
        return Err(ReportError::ScoreOutOfRange { value: score, range });
    }
    let quotations = match extract_blocks(text, "quotations").blocks.first() {
        Some(b) => numbered_quotes(&b.content),
        None => numbered_quotes(text),
    };
    if score > 0 && quotations.is_empty() {
        return Err(ReportError::MissingQuotations { score });
    }
    Ok(TaggedReport {
        explanation,
        quotations,
        score,
    })
}

/// Splits a response carrying several reports at each `</score>` and parses each piece.
pub fn parse_element_reports(text: &str, contract: &OutputContract) -> Vec<Result<TaggedReport, ReportError>> {
    let range = contract.score_range();
    let mut out = Vec::new();
    let mut start = 0;
    for (i, _) in text.match_indices("</score>") {
        let end = i + "</score>".len();
        out.push(parse_with_range(&text[start..end], range));
        start = end;
    }
    out
}

/// Canonical serialization; [`parse_element_report`] inverts it for valid reports.
pub fn format_report(r: &TaggedReport) -> String {
    let mut out = format!("<explanation>{}</explanation>\n<quotations>", r.explanation);
    for (i, q) in r.quotations.iter().enumerate() {
        let n = i + 1;
        out.push_str(&format!("<quote{n}>{q}</quote{n}>"));
    }
    out.push_str(&format!("</quotations>\n<score>{}</score>", r.score));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ContractKind;

    fn contract() -> OutputContract {
        OutputContract::new(ContractKind::ElementReport)
    }

    #[test]
    fn parses_model_style_report() {
        let text = "[1] Legal limits - <explanation>Present. Bounded by law.</explanation> - \
            <quotations> <quote2>\"second\"</quote2>, <quote1>\"first\"</quote1> </quotations> - <score>9</score>";
        let r = parse_element_report(text, &contract()).unwrap();
        assert_eq!(r.score, 9);
        assert_eq!(r.quotations, vec!["\"first\"", "\"second\""]);
        assert_eq!(r.explanation, "Present. Bounded by law.");
    }

    #[test]
    fn score_errors() {
        let c = contract();
        let base = "<explanation>x</explanation><quotations><quote1>q</quote1></quotations>";
        assert_eq!(
            parse_element_report(&format!("{base}<score>11</score>"), &c),
            Err(ReportError::ScoreOutOfRange {
                value: 11,
                range: IntRange::new(0, 10)
            })
        );
        assert_eq!(parse_element_report(base, &c), Err(ReportError::MissingScore));
        assert_eq!(
            parse_element_report(&format!("{base}<score>7.5</score>"), &c)
                .unwrap_err()
                .code(),
            "non-integer-score"
        );
        assert_eq!(
            parse_element_report("<score>0</score>", &c),
            Err(ReportError::MissingExplanation)
        );
    }

    #[test]
    fn zero_score_needs_no_quotes() {
        let r = parse_element_report("<explanation>Absent.</explanation><score>0</score>", &contract()).unwrap();
        assert!(r.quotations.is_empty());
        assert_eq!(
            parse_element_report("<explanation>Weak.</explanation><score>2</score>", &contract()),
            Err(ReportError::MissingQuotations { score: 2 })
        );
    }

    #[test]
    fn repeated_reports_split_on_score() {
        let a = TaggedReport {
            explanation: "a".into(),
            quotations: vec!["q".into()],
            score: 3,
        };
        let b = TaggedReport {
            explanation: "b".into(),
            quotations: vec![],
            score: 0,
        };
        let text = format!("[1] {}\n\n[2] {}\ntrailing", format_report(&a), format_report(&b));
        let got = parse_element_reports(&text, &contract());
        assert_eq!(got, vec![Ok(a), Ok(b)]);
    }

    #[test]
    fn canonical_round_trip() {
        let r = TaggedReport {
            explanation: "Present.".into(),
            quotations: vec!["one".into(), "two ... three".into()],
            score: 10,
        };
        assert_eq!(parse_element_report(&format_report(&r), &contract()).unwrap(), r);
    }
}
