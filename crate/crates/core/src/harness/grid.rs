//! The enumerative-bound by abstention grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::{summarize_counts, CellStats};
use super::HarnessError;
use crate::codec::Artifact;
use crate::model::{
    AbstentionPolicy, ContractKind, IntRange, OutputContract, PipelineSpec, PromptTemplate, RunParams, Stage, StageKind,
};
use crate::orchestrator::{Orchestrator, RunOptions};

/// The exact sentence appended to prompts in abstention cells.
pub const ABSTENTION_SENTENCE: &str = "Or, you can say: 'There is no evidence for that!'";
/// What the response parser looks for to detect abstention.
pub const ABSTENTION_MARKER: &str = "There is no evidence for that!";

const DEFAULT_BASE_PROMPT: &str = "Read the letter below and produce evidence that its author is \
advocating for {claim}. Give {range} pieces of evidence. Put each piece inside \
<evidence></evidence> tags.{abstention}\n\nLetter:\n{letter}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCondition {
    pub enum_range: IntRange,
    #[serde(rename = "abstention")]
    pub abstention_enabled: bool,
    #[serde(default = "default_runs")]
    pub runs: u32,
}

fn default_runs() -> u32 {
    50
}

impl GridCondition {
    pub fn new(lo: i64, hi: i64, abstention: bool, runs: u32) -> Self {
        Self {
            enum_range: IntRange { lo, hi },
            abstention_enabled: abstention,
            runs,
        }
    }

    /// `1-10 / Yes` style row label.
    pub fn label(&self) -> String {
        format!(
            "{}-{} / {}",
            self.enum_range.lo,
            self.enum_range.hi,
            if self.abstention_enabled { "Yes" } else { "No" }
        )
    }

    /// Filesystem- and id-safe slug.
    pub fn slug(&self) -> String {
        format!(
            "{}-{}-{}",
            self.enum_range.lo,
            self.enum_range.hi,
            if self.abstention_enabled { "abstain" } else { "forced" }
        )
    }

    pub fn range_phrase(&self) -> String {
        format!("between {} and {}", self.enum_range.lo, self.enum_range.hi)
    }
}

/// The four cells in reporting order.
pub fn standard_grid(runs: u32) -> Vec<GridCondition> {
    vec![
        GridCondition::new(1, 10, false, runs),
        GridCondition::new(1, 10, true, runs),
        GridCondition::new(0, 10, false, runs),
        GridCondition::new(0, 10, true, runs),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Config {
    /// Must contain `{letter}`, `{claim}`, `{range}` and `{abstention}`.
    #[serde(default = "default_base_prompt")]
    pub base_prompt: String,
    pub claim: String,
    #[serde(default)]
    pub conditions: Vec<GridCondition>,
}

fn default_base_prompt() -> String {
    DEFAULT_BASE_PROMPT.to_string()
}

impl Exp1Config {
    pub fn new(claim: impl Into<String>, conditions: Vec<GridCondition>) -> Self {
        Self {
            base_prompt: default_base_prompt(),
            claim: claim.into(),
            conditions,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let mut c: Exp1Config = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if c.conditions.is_empty() {
            c.conditions = standard_grid(default_runs());
        }
        Ok(c)
    }

    /// Single-stage pipeline for one cell.
    pub fn pipeline(&self, cond: &GridCondition) -> Result<PipelineSpec, HarnessError> {
        let template =
            PromptTemplate::new(self.base_prompt.clone()).map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut contract = OutputContract::new(ContractKind::EvidenceList);
        contract.enum_range = Some(cond.enum_range);
        contract.abstention = Some(AbstentionPolicy {
            marker: ABSTENTION_MARKER.into(),
            enabled: cond.abstention_enabled,
        });
        let mut stage = Stage::new("evidence", StageKind::Extract, template, contract);
        stage.runs = cond.runs;
        let mut metadata = BTreeMap::new();
        metadata.insert("experiment".into(), "abstention-grid".into());
        metadata.insert("condition".into(), cond.label());
        Ok(PipelineSpec {
            id: format!("exp1-{}", cond.slug()),
            metadata,
            stages: vec![stage],
            edges: vec![],
            report: None,
        })
    }

    pub fn inputs(&self, cond: &GridCondition, letter: &str) -> BTreeMap<String, String> {
        let abstention = if cond.abstention_enabled {
            format!("\n{ABSTENTION_SENTENCE}")
        } else {
            String::new()
        };
        [
            ("letter", letter.to_string()),
            ("claim", self.claim.clone()),
            ("range", cond.range_phrase()),
            ("abstention", abstention),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// The prompt every run of `cond` receives.
    pub fn prompt(&self, cond: &GridCondition, letter: &str) -> Result<String, HarnessError> {
        let spec = self.pipeline(cond)?;
        spec.stages[0]
            .template
            .render(&self.inputs(cond, letter))
            .map_err(|e| HarnessError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub condition: GridCondition,
    pub run_id: String,
    pub stats: CellStats,
    /// Responses carrying the abstention marker.
    pub abstained_runs: usize,
    /// Responses whose item count falls outside the requested range.
    pub out_of_range_runs: usize,
    pub failed_slots: Vec<u32>,
}

/// Runs every condition as its own pipeline run `<prefix>-<slug>`.
pub fn run_abstention_grid(
    orch: &Orchestrator,
    letter: &str,
    config: &Exp1Config,
    params: &RunParams,
    run_prefix: &str,
) -> Result<Vec<CellResult>, HarnessError> {
    if letter.trim().is_empty() {
        return Err(HarnessError::Config("letter is empty".into()));
    }
    let mut out = Vec::new();
    for cond in &config.conditions {
        let spec = config.pipeline(cond)?;
        let run_id = format!("{run_prefix}-{}", cond.slug());
        let state = if orch.store().exists(&run_id) {
            orch.resume(&run_id, Some(&spec))?
        } else {
            orch.run(
                &spec,
                config.inputs(cond, letter),
                params.clone(),
                RunOptions {
                    run_id: Some(run_id.clone()),
                    ..Default::default()
                },
            )?
        };
        let slots = state.artifacts.get("evidence").cloned().unwrap_or_default();
        let mut counts = Vec::new();
        let (mut abstained_runs, mut out_of_range_runs) = (0, 0);
        for a in slots.values() {
            if let Artifact::EvidenceList {
                items,
                abstained,
                out_of_range,
                ..
            } = a
            {
                counts.push(items.len() as i64);
                abstained_runs += usize::from(*abstained);
                out_of_range_runs += usize::from(*out_of_range);
            }
        }
        let failed_slots = (0..cond.runs).filter(|s| !slots.contains_key(s)).collect();
        out.push(CellResult {
            condition: *cond,
            run_id,
            stats: summarize_counts(&counts)?,
            abstained_runs,
            out_of_range_runs,
            failed_slots,
        });
    }
    Ok(out)
}

/// `condition,mean,sd,zero_runs,runs,abstained_runs,failed_slots` at two decimals.
pub fn grid_csv(cells: &[CellResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "condition",
        "mean",
        "sd",
        "zero_runs",
        "runs",
        "abstained_runs",
        "failed_slots",
    ])
    .expect("write to memory");
    for c in cells {
        w.write_record([
            c.condition.label(),
            format!("{:.2}", c.stats.mean),
            format!("{:.2}", c.stats.sd),
            c.stats.zero_runs.to_string(),
            c.stats.runs().to_string(),
            c.abstained_runs.to_string(),
            c.failed_slots.len().to_string(),
        ])
        .expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_and_order() {
        let g = standard_grid(50);
        let labels: Vec<_> = g.iter().map(GridCondition::label).collect();
        assert_eq!(labels, ["1-10 / No", "1-10 / Yes", "0-10 / No", "0-10 / Yes"]);
        assert!(g.iter().all(|c| c.runs == 50));
    }

    #[test]
    fn config_defaults_to_full_grid() {
        let c = Exp1Config::from_toml_str("claim = \"x\"").unwrap();
        assert_eq!(c.conditions.len(), 4);
        assert_eq!(c.base_prompt, DEFAULT_BASE_PROMPT);
        let c = Exp1Config::from_toml_str(
            "claim = \"x\"\n[[conditions]]\nenum_range = [0, 3]\nabstention = true\nruns = 2\n",
        )
        .unwrap();
        assert_eq!(c.conditions, vec![GridCondition::new(0, 3, true, 2)]);
    }
}
