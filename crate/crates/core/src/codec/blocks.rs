//! Lenient `<tag>…</tag>` block scanning.

use serde::{Deserialize, Serialize};

use crate::model::AbstentionPolicy;

/// One well-formed block. `start..end` spans the whole `<tag>…</tag>` in the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub content: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockScan {
    pub blocks: Vec<Block>,
    /// Openings with no closing tag after them.
    pub malformed: usize,
    /// Openings swallowed inside another block (the first close ended the outer one).
    pub nested: usize,
}

impl BlockScan {
    pub fn contents(&self) -> Vec<&str> {
        self.blocks.iter().map(|b| b.content.as_str()).collect()
    }
}

/// Scans `text` for `<tag>…</tag>` pairs in document order.
///
/// The first close after an opening ends the block. Closing tags without an
/// opening are skipped; openings never closed are counted in `malformed`.
pub fn extract_blocks(text: &str, tag: &str) -> BlockScan {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut scan = BlockScan::default();
    let mut pos = 0;
    while let Some(rel) = text[pos..].find(&open) {
        let start = pos + rel;
        let body = start + open.len();
        match text[body..].find(&close) {
            Some(crel) => {
                let content = &text[body..body + crel];
                scan.nested += content.matches(&open).count();
                let end = body + crel + close.len();
                scan.blocks.push(Block {
                    content: content.to_string(),
                    start,
                    end,
                });
                pos = end;
            }
            None => {
                scan.malformed += text[start..].matches(&open).count();
                break;
            }
        }
    }
    scan
}

/// Collapses whitespace runs to one space, trims, and lowercases ASCII.
pub fn normalize_loose(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceCount {
    pub count: usize,
    pub abstained: bool,
    pub malformed: usize,
}

/// Counts `<evidence>` blocks and checks for the abstention marker.
pub fn count_evidence(text: &str, policy: Option<&AbstentionPolicy>) -> EvidenceCount {
    let scan = extract_blocks(text, "evidence");
    let abstained = policy.is_some_and(|p| {
        let marker = normalize_loose(&p.marker);
        p.enabled && !marker.is_empty() && normalize_loose(text).contains(&marker)
    });
    EvidenceCount {
        count: scan.blocks.len(),
        abstained,
        malformed: scan.malformed,
    }
}
