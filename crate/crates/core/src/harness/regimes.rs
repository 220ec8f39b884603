//! The three orchestration regimes over one letter.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::codec::{parse_elements_schema, Artifact, ElementSchema, TaggedReport};
use crate::model::{BindingSource, FanoutPolicy, PipelineSpec, RunParams};
use crate::orchestrator::{Decision, Orchestrator, RunOptions, RunState, RunStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Baseline,
    TwoStage,
    MultiStage,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Baseline, Regime::TwoStage, Regime::MultiStage];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Baseline => "baseline",
            Regime::TwoStage => "two-stage",
            Regime::MultiStage => "multi-stage",
        }
    }

    /// Bundled pipeline for this regime.
    pub fn spec(self) -> PipelineSpec {
        let text = match self {
            Regime::Baseline => include_str!("../../pipelines/baseline.toml"),
            Regime::TwoStage => include_str!("../../pipelines/two-stage.toml"),
            Regime::MultiStage => include_str!("../../pipelines/multi-stage.toml"),
        };
        PipelineSpec::from_toml_str(text).expect("bundled pipeline parses")
    }

    pub fn uses_schema(self) -> bool {
        self != Regime::Baseline
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown regime `{s}`")))
    }
}

pub const SCHEMA_STAGE: &str = "schema";
pub const APPLY_STAGE: &str = "apply";
/// Run input carrying a pre-approved schema.
pub const SCHEMA_INPUT: &str = "schema";

/// Rewrites a schema-building pipeline to take an approved schema as the run
/// input `schema` instead of generating one.
pub fn with_approved_schema(spec: &PipelineSpec) -> PipelineSpec {
    let mut out = spec.clone();
    out.stages.retain(|s| s.id != SCHEMA_STAGE);
    out.edges.retain(|e| e.from != SCHEMA_STAGE && e.to != SCHEMA_STAGE);
    for stage in &mut out.stages {
        for source in stage.sources.values_mut() {
            if BindingSource::parse(source) == Some(BindingSource::Stage(SCHEMA_STAGE.into())) {
                *source = format!("input.{SCHEMA_INPUT}");
            }
        }
        if let FanoutPolicy::PerDimension {
            from_stage, from_input, ..
        } = &mut stage.fanout
        {
            if from_stage.as_deref() == Some(SCHEMA_STAGE) {
                *from_stage = None;
                *from_input = Some(SCHEMA_INPUT.into());
            }
        }
    }
    out.id = format!("{}-approved-schema", spec.id);
    out
}

/// Where the element schema comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemaSeed {
    /// Reference text the schema stage derives elements from.
    Corpus(String),
    /// Already approved; the schema stage is skipped.
    Approved(ElementSchema),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApprovalPolicy {
    /// Stop at the first open checkpoint.
    Halt,
    /// Approve each checkpoint as it opens, recording the decision.
    AutoApprove,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub run_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<ElementSchema>,
    /// Per element key, in schema order.
    pub reports: Vec<(String, TaggedReport)>,
    /// Schema elements without a usable report.
    pub missing: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<String>,
}

impl RegimeReport {
    pub fn scores(&self) -> Vec<(String, i64)> {
        self.reports.iter().map(|(k, r)| (k.clone(), r.score)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegimeOutcome {
    Halted { run_id: String, stage: String },
    Rejected { run_id: String, stage: String },
    Complete(RegimeReport),
}

/// Runs one regime to completion or to a checkpoint, depending on `approval`.
pub fn run_regime(
    orch: &Orchestrator,
    regime: Regime,
    letter: &str,
    seed: Option<&SchemaSeed>,
    params: &RunParams,
    approval: ApprovalPolicy,
    run_id: &str,
) -> Result<RegimeOutcome, HarnessError> {
    let mut inputs = BTreeMap::from([("letter".to_string(), letter.to_string())]);
    let spec = match (regime.uses_schema(), seed) {
        (false, _) => regime.spec(),
        (true, Some(SchemaSeed::Corpus(text))) => {
            inputs.insert("seed".into(), text.clone());
            regime.spec()
        }
        (true, Some(SchemaSeed::Approved(schema))) => {
            inputs.insert(SCHEMA_INPUT.into(), schema.to_canonical_json());
            with_approved_schema(&regime.spec())
        }
        (true, None) => {
            return Err(HarnessError::Config(format!(
                "{regime} needs a seed corpus or an approved schema"
            )))
        }
    };
    let opts = RunOptions {
        run_id: Some(run_id.into()),
        ..Default::default()
    };
    let mut state = orch.run(&spec, inputs, params.clone(), opts)?;
    loop {
        match state.status.clone() {
            RunStatus::Complete => return Ok(RegimeOutcome::Complete(regime_report(regime, &state)?)),
            RunStatus::Rejected { stage } => {
                return Ok(RegimeOutcome::Rejected {
                    run_id: run_id.into(),
                    stage,
                })
            }
            RunStatus::AwaitingApproval { stage } if approval == ApprovalPolicy::Halt => {
                return Ok(RegimeOutcome::Halted {
                    run_id: run_id.into(),
                    stage,
                })
            }
            RunStatus::AwaitingApproval { stage } => {
                let mut d = Decision::approve(stage, "auto");
                d.note = "approved by harness policy".into();
                orch.resolve_checkpoint(run_id, d)?;
                state = orch.resume(run_id, None)?;
            }
            RunStatus::Running => state = orch.resume(run_id, None)?,
            RunStatus::Failed { code, message } => {
                return Err(HarnessError::Config(format!("run {run_id} failed: {code}: {message}")))
            }
        }
    }
}

/// Collects schema, element reports and synthesis from a completed run.
pub fn regime_report(regime: Regime, state: &RunState) -> Result<RegimeReport, HarnessError> {
    let schema = match state.artifact(SCHEMA_STAGE, 0).and_then(Artifact::schema) {
        Some(s) => Some(s.clone()),
        None => state
            .inputs
            .get(SCHEMA_INPUT)
            .map(|t| parse_elements_schema(t))
            .transpose()
            .map_err(|e| HarnessError::Config(e.to_string()))?,
    };
    let mut by_key: BTreeMap<String, TaggedReport> = BTreeMap::new();
    match regime {
        Regime::Baseline => {}
        Regime::TwoStage => {
            let schema = schema.as_ref().ok_or(HarnessError::MissingSchema)?;
            if let Some(a) = state.artifact(APPLY_STAGE, 0) {
                let reports = a.reports();
                if reports.len() != schema.elements.len() {
                    return Err(HarnessError::ReportMismatch {
                        expected: schema.elements.len(),
                        found: reports.len(),
                    });
                }
                for (e, r) in schema.elements.iter().zip(reports) {
                    by_key.insert(e.element_key.clone(), r.clone());
                }
            }
        }
        Regime::MultiStage => {
            for (slot, a) in state.artifacts.get(APPLY_STAGE).into_iter().flatten() {
                let key = state
                    .calls
                    .get(&(APPLY_STAGE.to_string(), *slot))
                    .and_then(|c| c.item.clone());
                if let (Some(key), Some(r)) = (key, a.reports().first()) {
                    by_key.insert(key, (*r).clone());
                }
            }
        }
    }
    let report_stage = state.spec().report_stage().map(|s| s.id.clone());
    let synthesis = match regime {
        Regime::TwoStage => None,
        _ => report_stage
            .as_deref()
            .and_then(|id| state.artifact(id, 0))
            .map(Artifact::binding_text),
    };
    let (mut reports, mut missing) = (Vec::new(), Vec::new());
    if let Some(schema) = &schema {
        for e in &schema.elements {
            match by_key.remove(&e.element_key) {
                Some(r) => reports.push((e.element_key.clone(), r)),
                None => missing.push(e.element_key.clone()),
            }
        }
    }
    Ok(RegimeReport {
        regime,
        run_id: state.run_id.clone(),
        schema,
        reports,
        missing,
        synthesis,
    })
}
