//! Correspondence between a free-form baseline itemization and schema elements.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::codec::ElementSchema;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRow {
    pub row: u32,
    pub baseline_element: String,
    /// Schema element keys, `;`-separated in the CSV.
    pub schema_elements: Vec<String>,
}

/// Reads `row,baseline_element,schema_elements` CSV.
pub fn parse_mapping(text: &str) -> Result<Vec<MappingRow>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| HarnessError::Config(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or_default().trim().to_string();
        out.push(MappingRow {
            row: field(0)
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad row number `{}`", field(0))))?,
            baseline_element: field(1),
            schema_elements: field(2)
                .split(';')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
        });
    }
    Ok(out)
}

/// Mapped keys absent from `schema`, as (row, key).
pub fn unknown_targets(rows: &[MappingRow], schema: &ElementSchema) -> Vec<(u32, String)> {
    let keys = schema.keys();
    rows.iter()
        .flat_map(|r| {
            r.schema_elements
                .iter()
                .filter(|k| !keys.contains(&k.as_str()))
                .map(move |k| (r.row, k.clone()))
        })
        .collect()
}

/// Schema keys that no baseline row maps onto.
pub fn uncovered_elements<'a>(rows: &[MappingRow], schema: &'a ElementSchema) -> Vec<&'a str> {
    schema
        .keys()
        .into_iter()
        .filter(|k| !rows.iter().any(|r| r.schema_elements.iter().any(|e| e == k)))
        .collect()
}
