//! Independent reference implementations used as test oracles.

use std::collections::BTreeSet;

use leash_core::codebook::{ScreeningRecord, Verdict};

/// Byte-at-a-time state machine, written separately from the library scanner.
pub fn reference_scan(text: &str, tag: &str) -> (Vec<String>, usize, usize) {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut blocks = Vec::new();
    let (mut nested, mut inner_opens) = (0, 0);
    let mut inside: Option<usize> = None;
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        match inside {
            None if rest.starts_with(&open) => {
                inside = Some(i + open.len());
                inner_opens = 0;
                i += open.len();
            }
            Some(body) if rest.starts_with(&close) => {
                blocks.push(text[body..i].to_string());
                nested += inner_opens;
                inside = None;
                i += close.len();
            }
            Some(_) if rest.starts_with(&open) => {
                inner_opens += 1;
                i += open.len();
            }
            _ => i += rest.chars().next().unwrap().len_utf8(),
        }
    }
    let malformed = if inside.is_some() { 1 + inner_opens } else { 0 };
    (blocks, nested, malformed)
}

/// Welford's online mean and sample SD.
pub fn welford(xs: &[i64]) -> (f64, f64) {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for &x in xs {
        let x = x as f64;
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    let sd = if n > 1.0 { (m2 / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    let scale = a.abs().max(b.abs());
    scale == 0.0 || (a - b).abs() / scale < tol
}

/// Textbook single-pass sums formula, independent of the library's centered version.
pub fn pearson_naive(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Intersection of the per-model relevant sets.
pub fn brute_force_screen(records: &[ScreeningRecord]) -> BTreeSet<String> {
    let models: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| r.passes.iter().map(|p| p.model.as_str()))
        .collect();
    let mut sets = models.iter().map(|m| {
        records
            .iter()
            .filter(|r| r.passes.iter().any(|p| p.model == *m && p.verdict == Verdict::Relevant))
            .map(|r| r.record_id.clone())
            .collect::<BTreeSet<_>>()
    });
    let first = sets.next().unwrap_or_default();
    sets.fold(first, |acc, s| acc.intersection(&s).cloned().collect())
}
