//! The coding instrument, loaded from a data file.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::IntRange;

const DEFAULT_INSTRUMENT: &str = include_str!("../../data/instrument.toml");

pub const NONE_CODE: &str = "NONE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItemKind {
    SelectOne,
    Multiselect,
    OpenText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemOption {
    pub code: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    /// Questionnaire part, 0 (screening) to 6.
    pub part: u8,
    pub kind: ItemKind,
    pub title: String,
    pub requires_reason: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<ItemOption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<IntRange>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub none_exclusive: bool,
}

impl Item {
    pub fn option(&self, code: &str) -> Option<&ItemOption> {
        self.options.iter().find(|o| o.code == code)
    }

    pub fn has_option(&self, code: &str) -> bool {
        self.option(code).is_some()
    }

    pub fn is_scored(&self) -> bool {
        self.scale.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instrument {
    pub version: String,
    pub items: Vec<Item>,
}

#[derive(Debug, Error)]
pub enum InstrumentError {
    #[error("reading instrument: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing instrument: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid instrument: {0}")]
    Invalid(String),
}

impl Instrument {
    /// The bundled Q00-Q33 instrument.
    pub fn standard() -> Self {
        Self::from_toml_str(DEFAULT_INSTRUMENT).expect("bundled instrument is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, InstrumentError> {
        let inst: Instrument = toml::from_str(text)?;
        inst.check()?;
        Ok(inst)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstrumentError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn item(&self, id: &str) -> Option<&Item> {
        self.items.iter().find(|i| i.id == id)
    }

    fn check(&self) -> Result<(), InstrumentError> {
        let mut ids = BTreeSet::new();
        for item in &self.items {
            let bad = |msg: &str| Err(InstrumentError::Invalid(format!("{}: {msg}", item.id)));
            if !ids.insert(item.id.as_str()) {
                return bad("duplicate item id");
            }
            match item.kind {
                ItemKind::OpenText => {
                    if !item.options.is_empty() {
                        return bad("open-text item declares options");
                    }
                }
                ItemKind::SelectOne | ItemKind::Multiselect => {
                    if item.options.len() < 2 {
                        return bad("select item needs at least two options");
                    }
                    let codes: BTreeSet<_> = item.options.iter().map(|o| o.code.as_str()).collect();
                    if codes.len() != item.options.len() {
                        return bad("duplicate option code");
                    }
                }
            }
            if item.none_exclusive && !item.has_option(NONE_CODE) {
                return bad("none_exclusive without a NONE option");
            }
            if let Some(scale) = item.scale {
                if scale.lo >= scale.hi {
                    return bad("scale needs min < max");
                }
                let anchors: Vec<i64> = item.options.iter().filter_map(|o| o.anchor).collect();
                if anchors.iter().any(|a| !scale.contains(*a)) {
                    return bad("anchor outside scale");
                }
                if !anchors.windows(2).all(|w| w[0] < w[1]) {
                    return bad("anchors not strictly increasing");
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_instrument_shape() {
        let inst = Instrument::standard();
        assert_eq!(inst.items.len(), 34);
        let ids: Vec<_> = inst.items.iter().map(|i| i.id.clone()).collect();
        let expected: Vec<_> = (0..34).map(|n| format!("Q{n:02}")).collect();
        assert_eq!(ids, expected);
        assert!(inst.item("Q08").unwrap().none_exclusive);
        assert_eq!(inst.item("Q13").unwrap().scale, Some(IntRange::new(0, 4)));
        assert!(inst.item("Q10").unwrap().has_option("NR"));
        assert!(!inst.item("Q01").unwrap().requires_reason);
    }

    #[test]
    fn rejects_single_option_select() {
        let text = r#"
version = "x"
[[items]]
id = "Q1"
part = 1
kind = "select-one"
title = "t"
requires_reason = false
options = [{ code = "A", label = "a" }]
"#;
        assert!(matches!(
            Instrument::from_toml_str(text),
            Err(InstrumentError::Invalid(_))
        ));
    }
}
