//! Slot planning: which items a stage runs over, and how fan-in is rendered.

use crate::codec::{parse_elements_schema, Artifact};
use crate::model::{FanoutPolicy, Segmenter, Stage};

/// One fan-out item: a key for reports and the text bound to `slot.item`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FanItem {
    pub key: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotPlan {
    pub slot: u32,
    /// 1-based repetition index.
    pub attempt: u32,
    pub item_index: usize,
    pub item: Option<FanItem>,
}

/// Splits after each run of blank lines; separators stay with the preceding
/// segment, so the segments concatenate back to `text`.
pub fn segment_paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let lines: Vec<(usize, &str)> = text
        .split_inclusive('\n')
        .scan(0, |pos, l| {
            let at = *pos;
            *pos += l.len();
            Some((at, l))
        })
        .collect();
    let mut i = 0;
    while i < lines.len() {
        let (at, line) = lines[i];
        let blank = line.trim().is_empty();
        if blank && at > start {
            let mut j = i;
            while j < lines.len() && lines[j].1.trim().is_empty() {
                j += 1;
            }
            let end = lines.get(j).map_or(text.len(), |(p, _)| *p);
            if end < text.len() {
                out.push(text[start..end].to_string());
                start = end;
            }
            i = j;
            continue;
        }
        i += 1;
    }
    if start < text.len() {
        out.push(text[start..].to_string());
    }
    out
}

/// Chunks of at most `n` characters.
pub fn segment_chars(text: &str, n: usize) -> Vec<String> {
    let n = n.max(1);
    let chars: Vec<char> = text.chars().collect();
    chars.chunks(n).map(|c| c.iter().collect()).collect()
}

/// Fan-out items for `stage`. `None` means the stage has no fan-out.
pub fn plan_items(
    stage: &Stage,
    input: impl Fn(&str) -> Option<String>,
    upstream_artifact: impl Fn(&str) -> Option<Artifact>,
) -> Result<Option<Vec<FanItem>>, String> {
    match &stage.fanout {
        FanoutPolicy::None => Ok(None),
        FanoutPolicy::PerSegment {
            source,
            segmenter,
            chunk_chars,
        } => {
            let text = input(source).ok_or_else(|| format!("missing input `{source}`"))?;
            let segs = match segmenter {
                Segmenter::Paragraphs => segment_paragraphs(&text),
                Segmenter::Chars => segment_chars(&text, chunk_chars.unwrap_or(4000)),
            };
            Ok(Some(
                segs.into_iter()
                    .enumerate()
                    .map(|(i, s)| FanItem {
                        key: format!("segment-{}", i + 1),
                        text: s,
                    })
                    .collect(),
            ))
        }
        FanoutPolicy::PerDimension {
            dimensions,
            from_stage,
            from_input,
        } => {
            if let Some(up) = from_stage {
                let art = upstream_artifact(up).ok_or_else(|| format!("stage `{up}` has no artifact"))?;
                let schema = art
                    .schema()
                    .ok_or_else(|| format!("stage `{up}` did not produce an elements schema"))?;
                return Ok(Some(schema_items(schema)));
            }
            if let Some(name) = from_input {
                let text = input(name).ok_or_else(|| format!("missing input `{name}`"))?;
                let schema = parse_elements_schema(&text).map_err(|e| format!("input `{name}`: {e}"))?;
                return Ok(Some(schema_items(&schema)));
            }
            Ok(Some(
                dimensions
                    .iter()
                    .map(|d| FanItem {
                        key: d.clone(),
                        text: d.clone(),
                    })
                    .collect(),
            ))
        }
    }
}

fn schema_items(schema: &crate::codec::ElementSchema) -> Vec<FanItem> {
    schema
        .elements
        .iter()
        .map(|e| FanItem {
            key: e.element_key.clone(),
            text: e.element_label.clone(),
        })
        .collect()
}

/// Slot numbering: `item_index * runs + rep`, attempts `rep + 1`.
pub fn plan_slots(items: Option<Vec<FanItem>>, runs: u32) -> Vec<SlotPlan> {
    let runs = runs.max(1);
    match items {
        None => (0..runs)
            .map(|rep| SlotPlan {
                slot: rep,
                attempt: rep + 1,
                item_index: 0,
                item: None,
            })
            .collect(),
        Some(items) => items
            .into_iter()
            .enumerate()
            .flat_map(|(i, item)| {
                (0..runs).map(move |rep| SlotPlan {
                    slot: i as u32 * runs + rep,
                    attempt: rep + 1,
                    item_index: i,
                    item: Some(item.clone()),
                })
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paragraphs_are_lossless() {
        for text in ["", "one", "a\n\nb", "a\n\n\n  \nb\nc\n\nd\n", "\n\nlead", "trail\n\n"] {
            let segs = segment_paragraphs(text);
            assert_eq!(segs.concat(), text, "{text:?}");
        }
        assert_eq!(segment_paragraphs("a\n\nb\nc\n\nd"), vec!["a\n\n", "b\nc\n\n", "d"]);
    }

    #[test]
    fn char_chunks() {
        assert_eq!(segment_chars("abcdefg", 3), vec!["abc", "def", "g"]);
        assert_eq!(
            segment_chars("\u{645}\u{627}\u{644}\u{643}", 3).concat(),
            "\u{645}\u{627}\u{644}\u{643}"
        );
    }

    #[test]
    fn slot_numbering() {
        let items = vec![
            FanItem {
                key: "a".into(),
                text: "A".into(),
            },
            FanItem {
                key: "b".into(),
                text: "B".into(),
            },
        ];
        let plan = plan_slots(Some(items), 2);
        let got: Vec<_> = plan.iter().map(|p| (p.slot, p.attempt, p.item_index)).collect();
        assert_eq!(got, vec![(0, 1, 0), (1, 2, 0), (2, 1, 1), (3, 2, 1)]);
        assert_eq!(plan_slots(None, 3).len(), 3);
    }
}
