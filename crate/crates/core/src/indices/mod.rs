//! Construct indices on the unit interval, pairwise-deletion correlations and
//! the depth/autonomy plane export.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::{Answer, AnswerValue, CodedRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construct {
    Depth,
    Autonomy,
    Reproducibility,
}

impl Construct {
    pub const ALL: [Construct; 3] = [Construct::Depth, Construct::Autonomy, Construct::Reproducibility];

    pub fn as_str(self) -> &'static str {
        match self {
            Construct::Depth => "depth",
            Construct::Autonomy => "autonomy",
            Construct::Reproducibility => "reproducibility",
        }
    }
}

impl fmt::Display for Construct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[default]
    Direct,
    Inverted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ScaleRule {
    Ordinal {
        min: i64,
        max: i64,
        #[serde(default)]
        polarity: Polarity,
    },
    /// Code → unit value; a multiselect answer takes the largest mapped value.
    Categorical { map: BTreeMap<String, f64> },
    /// Share of `codes` selected; NONE counts as zero.
    SelectionCount { codes: Vec<String> },
}

fn default_missing() -> Vec<String> {
    vec!["NR".into(), "NA".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScaling {
    pub item: String,
    #[serde(flatten)]
    pub rule: ScaleRule,
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
}

impl ItemScaling {
    pub fn ordinal(item: impl Into<String>, min: i64, max: i64, polarity: Polarity) -> Self {
        Self {
            item: item.into(),
            rule: ScaleRule::Ordinal { min, max, polarity },
            missing: default_missing(),
        }
    }

    pub fn categorical<I, S>(item: impl Into<String>, map: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Self {
            item: item.into(),
            rule: ScaleRule::Categorical {
                map: map.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            },
            missing: default_missing(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndexError {
    #[error("unmapped-code: item {item} has no scaling for `{code}`")]
    UnmappedCode { item: String, code: String },
    #[error("item-mismatch: scaling for {expected} applied to an answer for {found}")]
    ItemMismatch { expected: String, found: String },
    #[error("length-mismatch: {left} vs {right} values")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid-scaling: {0}")]
    InvalidScaling(String),
}

impl IndexError {
    pub fn code(&self) -> &'static str {
        match self {
            IndexError::UnmappedCode { .. } => "unmapped-code",
            IndexError::ItemMismatch { .. } => "item-mismatch",
            IndexError::LengthMismatch { .. } => "length-mismatch",
            IndexError::InvalidScaling(_) => "invalid-scaling",
        }
    }
}

/// Item scalings plus construct membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    #[serde(default)]
    pub version: String,
    pub membership: BTreeMap<Construct, Vec<String>>,
    pub items: Vec<ItemScaling>,
}

impl Scaling {
    /// The bundled scaling file.
    pub fn standard() -> Self {
        Self::from_toml_str(include_str!("../../data/scaling.toml")).expect("bundled scaling is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, IndexError> {
        let s: Scaling = toml::from_str(text).map_err(|e| IndexError::InvalidScaling(e.to_string()))?;
        s.check()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| IndexError::InvalidScaling(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    pub fn item(&self, id: &str) -> Option<&ItemScaling> {
        self.items.iter().find(|s| s.item == id)
    }

    fn check(&self) -> Result<(), IndexError> {
        for c in Construct::ALL {
            if !self.membership.contains_key(&c) {
                return Err(IndexError::InvalidScaling(format!("no membership for {c}")));
            }
        }
        for s in &self.items {
            match &s.rule {
                ScaleRule::Ordinal { min, max, .. } if min >= max => {
                    return Err(IndexError::InvalidScaling(format!(
                        "{}: min {min} >= max {max}",
                        s.item
                    )))
                }
                ScaleRule::Categorical { map } => {
                    if let Some((k, v)) = map.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                        return Err(IndexError::InvalidScaling(format!("{}: {k} maps to {v}", s.item)));
                    }
                }
                ScaleRule::SelectionCount { codes } if codes.is_empty() => {
                    return Err(IndexError::InvalidScaling(format!("{}: no codes to count", s.item)))
                }
                _ => {}
            }
        }
        for ids in self.membership.values() {
            if let Some(id) = ids.iter().find(|id| self.item(id).is_none()) {
                return Err(IndexError::InvalidScaling(format!("member {id} has no scaling")));
            }
        }
        Ok(())
    }
}

/// Unit value of one answer; `None` for unanswered or not-reported.
pub fn rescale_item(scaling: &ItemScaling, answer: &Answer) -> Result<Option<f64>, IndexError> {
    if scaling.item != answer.item {
        return Err(IndexError::ItemMismatch {
            expected: scaling.item.clone(),
            found: answer.item.clone(),
        });
    }
    let Some(value) = &answer.value else {
        return Ok(None);
    };
    let codes = value.codes();
    if codes.is_empty() || codes.iter().any(|c| scaling.missing.iter().any(|m| m == c)) {
        return Ok(None);
    }
    let unmapped = |code: &str| IndexError::UnmappedCode {
        item: scaling.item.clone(),
        code: code.to_string(),
    };
    match &scaling.rule {
        ScaleRule::Ordinal { min, max, polarity } => {
            let AnswerValue::Single(code) = value else {
                return Err(unmapped(&codes.join(",")));
            };
            let v: i64 = code.trim().parse().map_err(|_| unmapped(code))?;
            if v < *min || v > *max {
                return Err(unmapped(code));
            }
            let x = (v - min) as f64 / (max - min) as f64;
            Ok(Some(match polarity {
                Polarity::Direct => x,
                Polarity::Inverted => 1.0 - x,
            }))
        }
        ScaleRule::Categorical { map } => {
            let mut best: Option<f64> = None;
            for c in codes {
                let v = *map.get(c).ok_or_else(|| unmapped(c))?;
                best = Some(best.map_or(v, |b| b.max(v)));
            }
            Ok(best)
        }
        ScaleRule::SelectionCount { codes: counted } => {
            let mut n = 0usize;
            for c in codes {
                if counted.iter().any(|k| k == c) {
                    n += 1;
                } else if c != crate::codebook::NONE_CODE {
                    return Err(unmapped(c));
                }
            }
            Ok(Some(n as f64 / counted.len() as f64))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstructIndices {
    pub depth: Option<f64>,
    pub autonomy: Option<f64>,
    pub reproducibility: Option<f64>,
    /// Items that contributed, per construct.
    pub items_used: BTreeMap<Construct, usize>,
}

impl ConstructIndices {
    pub fn get(&self, c: Construct) -> Option<f64> {
        match c {
            Construct::Depth => self.depth,
            Construct::Autonomy => self.autonomy,
            Construct::Reproducibility => self.reproducibility,
        }
    }

    fn set(&mut self, c: Construct, v: Option<f64>) {
        match c {
            Construct::Depth => self.depth = v,
            Construct::Autonomy => self.autonomy = v,
            Construct::Reproducibility => self.reproducibility = v,
        }
    }
}

/// Available-case mean of each construct's rescaled items.
pub fn compute_indices(record: &CodedRecord, scaling: &Scaling) -> Result<ConstructIndices, IndexError> {
    let mut out = ConstructIndices::default();
    for c in Construct::ALL {
        let mut sum = 0.0;
        let mut n = 0usize;
        for id in scaling.membership.get(&c).map(Vec::as_slice).unwrap_or_default() {
            let Some(answer) = record.answers.get(id) else { continue };
            let item = scaling
                .item(id)
                .ok_or_else(|| IndexError::InvalidScaling(format!("no scaling for {id}")))?;
            if let Some(v) = rescale_item(item, answer)? {
                sum += v;
                n += 1;
            }
        }
        out.set(c, (n > 0).then(|| sum / n as f64));
        out.items_used.insert(c, n);
    }
    Ok(out)
}

/// Pearson correlation over positions where both values are present.
/// `None` when fewer than 3 pairs remain or either side has zero variance.
pub fn correlate(xs: &[Option<f64>], ys: &[Option<f64>]) -> Result<Option<f64>, IndexError> {
    if xs.len() != ys.len() {
        return Err(IndexError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    let pairs: Vec<(f64, f64)> = xs.iter().zip(ys).filter_map(|(x, y)| Some(((*x)?, (*y)?))).collect();
    if pairs.len() < 3 {
        return Ok(None);
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// Correlations for the three construct pairs, in the order
/// depth/autonomy, depth/reproducibility, autonomy/reproducibility.
pub fn construct_correlations(rows: &[(String, ConstructIndices)]) -> Vec<(Construct, Construct, Option<f64>)> {
    let col = |c: Construct| rows.iter().map(|(_, r)| r.get(c)).collect::<Vec<_>>();
    let pairs = [
        (Construct::Depth, Construct::Autonomy),
        (Construct::Depth, Construct::Reproducibility),
        (Construct::Autonomy, Construct::Reproducibility),
    ];
    pairs
        .into_iter()
        .map(|(a, b)| (a, b, correlate(&col(a), &col(b)).expect("columns share a length")))
        .collect()
}

pub const PLANE_HEADER: &str = "id,depth,autonomy,reproducibility";

/// Plane export as CSV. Missing values are empty fields; present values keep
/// full precision.
pub fn emit_plane(rows: &[(String, ConstructIndices)]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(PLANE_HEADER.split(',')).expect("write to memory");
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (id, r) in rows {
        w.write_record([id.clone(), fmt(r.depth), fmt(r.autonomy), fmt(r.reproducibility)])
            .expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
}
