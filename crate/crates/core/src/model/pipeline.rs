//! Declarative pipeline specs: stages, dependencies, contracts, fan-out.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::template::{scan_placeholders, PromptTemplate};

pub type StageId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageKind {
    Extract,
    Propose,
    Critique,
    Adjudicate,
    Apply,
    Synthesize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractKind {
    EvidenceList,
    ElementReport,
    ElementsSchema,
    AnswerRecord,
    FreeText,
}

impl ContractKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContractKind::EvidenceList => "evidence-list",
            ContractKind::ElementReport => "element-report",
            ContractKind::ElementsSchema => "elements-schema",
            ContractKind::AnswerRecord => "answer-record",
            ContractKind::FreeText => "free-text",
        }
    }
}

/// Inclusive integer interval, written `[lo, hi]` in spec files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(i64, i64)", into = "(i64, i64)")]
pub struct IntRange {
    pub lo: i64,
    pub hi: i64,
}

impl IntRange {
    pub const fn new(lo: i64, hi: i64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn is_well_formed(&self) -> bool {
        self.lo <= self.hi
    }
}

impl From<(i64, i64)> for IntRange {
    fn from((lo, hi): (i64, i64)) -> Self {
        Self { lo, hi }
    }
}

impl From<IntRange> for (i64, i64) {
    fn from(r: IntRange) -> Self {
        (r.lo, r.hi)
    }
}

impl fmt::Display for IntRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

pub const DEFAULT_SCORE_RANGE: IntRange = IntRange::new(0, 10);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AbstentionPolicy {
    pub marker: String,
    #[serde(default = "default_true")]
    pub enabled: bool,
}

impl AbstentionPolicy {
    pub fn enabled(marker: impl Into<String>) -> Self {
        Self {
            marker: marker.into(),
            enabled: true,
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutputContract {
    pub kind: ContractKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enum_range: Option<IntRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstention: Option<AbstentionPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_range: Option<IntRange>,
    /// Element reports only: the response carries one report per element, in order.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeated: bool,
}

impl OutputContract {
    pub fn new(kind: ContractKind) -> Self {
        Self {
            kind,
            enum_range: None,
            abstention: None,
            score_range: None,
            repeated: false,
        }
    }

    pub fn score_range(&self) -> IntRange {
        self.score_range.unwrap_or(DEFAULT_SCORE_RANGE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Segmenter {
    /// Split after each blank-line run; separators stay with the preceding segment.
    #[default]
    Paragraphs,
    /// Fixed-size chunks of `chunk_chars` characters.
    Chars,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum FanoutPolicy {
    #[default]
    None,
    PerSegment {
        /// Run input whose text is segmented.
        source: String,
        #[serde(default)]
        segmenter: Segmenter,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        chunk_chars: Option<usize>,
    },
    PerDimension {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        dimensions: Vec<String>,
        /// Take dimensions from the (approved) elements schema of this stage.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from_stage: Option<StageId>,
        /// Take dimensions from an elements schema passed as a run input.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from_input: Option<String>,
    },
}

/// Descriptive position of a stage on the depth/autonomy plane. Never affects execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageAnnotation {
    /// 1 (fact extraction) to 5 (deep interpretation).
    pub depth: u8,
    /// 0 (fully scaffolded) to 3 (model plans end to end).
    pub autonomy: u8,
}

impl Default for StageAnnotation {
    fn default() -> Self {
        Self { depth: 1, autonomy: 0 }
    }
}

/// Where a placeholder's value comes from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BindingSource {
    Input(String),
    Stage(StageId),
    StageCount(StageId),
    SlotIndex,
    SlotItem,
}

impl BindingSource {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "slot.index" => return Some(BindingSource::SlotIndex),
            "slot.item" => return Some(BindingSource::SlotItem),
            _ => {}
        }
        if let Some(name) = s.strip_prefix("input.") {
            return (!name.is_empty()).then(|| BindingSource::Input(name.to_string()));
        }
        let rest = s.strip_prefix("stage.")?;
        if let Some(id) = rest.strip_suffix(".count") {
            return (!id.is_empty() && !id.contains('.')).then(|| BindingSource::StageCount(id.to_string()));
        }
        (!rest.is_empty() && !rest.contains('.')).then(|| BindingSource::Stage(rest.to_string()))
    }
}

impl fmt::Display for BindingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BindingSource::Input(n) => write!(f, "input.{n}"),
            BindingSource::Stage(s) => write!(f, "stage.{s}"),
            BindingSource::StageCount(s) => write!(f, "stage.{s}.count"),
            BindingSource::SlotIndex => f.write_str("slot.index"),
            BindingSource::SlotItem => f.write_str("slot.item"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub id: StageId,
    pub kind: StageKind,
    pub template: PromptTemplate,
    /// Placeholder → source (`input.x`, `stage.id`, `stage.id.count`, `slot.index`,
    /// `slot.item`). Unlisted placeholders bind the run input of the same name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sources: BTreeMap<String, String>,
    pub contract: OutputContract,
    #[serde(default)]
    pub fanout: FanoutPolicy,
    #[serde(default = "default_runs")]
    pub runs: u32,
    #[serde(default)]
    pub checkpoint: bool,
    #[serde(default)]
    pub annotation: StageAnnotation,
}

fn default_runs() -> u32 {
    1
}

impl Stage {
    pub fn new(id: impl Into<String>, kind: StageKind, template: PromptTemplate, contract: OutputContract) -> Self {
        Self {
            id: id.into(),
            kind,
            template,
            sources: BTreeMap::new(),
            contract,
            fanout: FanoutPolicy::None,
            runs: 1,
            checkpoint: false,
            annotation: StageAnnotation::default(),
        }
    }

    /// Resolved source of a placeholder; `None` when the declared source is unparseable.
    pub fn source_of(&self, placeholder: &str) -> Option<BindingSource> {
        match self.sources.get(placeholder) {
            Some(s) => BindingSource::parse(s),
            None => Some(BindingSource::Input(placeholder.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: StageId,
    pub to: StageId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
    pub stages: Vec<Stage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<Edge>,
    /// The terminal stage producing the final report; defaults to the unique sink.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<StageId>,
}

#[derive(Debug, Error)]
pub enum SpecLoadError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing pipeline spec: {0}")]
    Parse(#[from] toml::de::Error),
}

/// A single invariant violation found by [`validate_pipeline`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "code", rename_all = "kebab-case")]
pub enum Violation {
    EmptyPipeline,
    DuplicateStage {
        stage: StageId,
    },
    DanglingEdge {
        from: StageId,
        to: StageId,
    },
    Cycle {
        stages: Vec<StageId>,
    },
    TerminalStages {
        count: usize,
    },
    ReportNotTerminal {
        stage: StageId,
    },
    MalformedTemplate {
        stage: StageId,
        detail: String,
    },
    UnboundPlaceholder {
        stage: StageId,
        name: String,
    },
    UnusedBinding {
        stage: StageId,
        name: String,
    },
    BadSource {
        stage: StageId,
        name: String,
        source: String,
    },
    SourceNotUpstream {
        stage: StageId,
        name: String,
        upstream: StageId,
    },
    SlotSourceWithoutFanout {
        stage: StageId,
        name: String,
    },
    EmptyFanoutDimensions {
        stage: StageId,
    },
    AmbiguousFanoutSource {
        stage: StageId,
    },
    FanoutSourceNotSchema {
        stage: StageId,
        upstream: StageId,
    },
    ZeroRuns {
        stage: StageId,
    },
    AnnotationOutOfRange {
        stage: StageId,
    },
    InvalidRange {
        stage: StageId,
        field: &'static str,
    },
    EmptyAbstentionMarker {
        stage: StageId,
    },
    RepeatedNonReport {
        stage: StageId,
    },
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::EmptyPipeline => "empty-pipeline",
            Violation::DuplicateStage { .. } => "duplicate-stage",
            Violation::DanglingEdge { .. } => "dangling-edge",
            Violation::Cycle { .. } => "cycle",
            Violation::TerminalStages { .. } => "terminal-stages",
            Violation::ReportNotTerminal { .. } => "report-not-terminal",
            Violation::MalformedTemplate { .. } => "malformed-template",
            Violation::UnboundPlaceholder { .. } => "unbound-placeholder",
            Violation::UnusedBinding { .. } => "unused-binding",
            Violation::BadSource { .. } => "bad-source",
            Violation::SourceNotUpstream { .. } => "source-not-upstream",
            Violation::SlotSourceWithoutFanout { .. } => "slot-source-without-fanout",
            Violation::EmptyFanoutDimensions { .. } => "empty-fanout-dimensions",
            Violation::AmbiguousFanoutSource { .. } => "ambiguous-fanout-source",
            Violation::FanoutSourceNotSchema { .. } => "fanout-source-not-schema",
            Violation::ZeroRuns { .. } => "zero-runs",
            Violation::AnnotationOutOfRange { .. } => "annotation-out-of-range",
            Violation::InvalidRange { .. } => "invalid-range",
            Violation::EmptyAbstentionMarker { .. } => "empty-abstention-marker",
            Violation::RepeatedNonReport { .. } => "repeated-non-report",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPipeline => write!(f, "pipeline has no stages"),
            Violation::DuplicateStage { stage } => write!(f, "stage id `{stage}` declared twice"),
            Violation::DanglingEdge { from, to } => write!(f, "edge {from} -> {to} names an unknown stage"),
            Violation::Cycle { stages } => write!(f, "cycle through stages {}", stages.join(", ")),
            Violation::TerminalStages { count } => {
                write!(f, "expected exactly one terminal stage, found {count}")
            }
            Violation::ReportNotTerminal { stage } => {
                write!(f, "report stage `{stage}` is unknown or not the terminal stage")
            }
            Violation::MalformedTemplate { stage, detail } => write!(f, "stage `{stage}`: {detail}"),
            Violation::UnboundPlaceholder { stage, name } => {
                write!(
                    f,
                    "stage `{stage}`: placeholder `{{{name}}}` is not in required_bindings"
                )
            }
            Violation::UnusedBinding { stage, name } => {
                write!(
                    f,
                    "stage `{stage}`: required binding `{name}` does not occur in the template"
                )
            }
            Violation::BadSource { stage, name, source } => {
                write!(f, "stage `{stage}`: cannot parse source `{source}` for `{name}`")
            }
            Violation::SourceNotUpstream { stage, name, upstream } => write!(
                f,
                "stage `{stage}`: `{name}` reads stage `{upstream}`, which is not upstream"
            ),
            Violation::SlotSourceWithoutFanout { stage, name } => {
                write!(
                    f,
                    "stage `{stage}`: `{name}` reads a slot value but the stage has no fan-out"
                )
            }
            Violation::EmptyFanoutDimensions { stage } => {
                write!(f, "stage `{stage}`: per-dimension fan-out has no dimensions")
            }
            Violation::AmbiguousFanoutSource { stage } => write!(
                f,
                "stage `{stage}`: per-dimension fan-out must use exactly one of dimensions, from_stage, from_input"
            ),
            Violation::FanoutSourceNotSchema { stage, upstream } => write!(
                f,
                "stage `{stage}`: dimensions come from `{upstream}`, which is not an upstream elements-schema stage"
            ),
            Violation::ZeroRuns { stage } => write!(f, "stage `{stage}`: runs must be at least 1"),
            Violation::AnnotationOutOfRange { stage } => {
                write!(f, "stage `{stage}`: annotation depth must be 1-5 and autonomy 0-3")
            }
            Violation::InvalidRange { stage, field } => {
                write!(f, "stage `{stage}`: {field} lower bound exceeds upper bound")
            }
            Violation::EmptyAbstentionMarker { stage } => {
                write!(f, "stage `{stage}`: enabled abstention policy has an empty marker")
            }
            Violation::RepeatedNonReport { stage } => {
                write!(
                    f,
                    "stage `{stage}`: `repeated` applies only to element-report contracts"
                )
            }
        }
    }
}

impl PipelineSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, SpecLoadError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SpecLoadError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SpecLoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn stage(&self, id: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.id == id)
    }

    /// Hex SHA-256 over the canonical JSON encoding of the pipeline.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("pipeline spec serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn predecessors(&self, id: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|e| e.to == id)
            .map(|e| e.from.as_str())
            .collect()
    }

    pub fn successors(&self, id: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|e| e.from == id)
            .map(|e| e.to.as_str())
            .collect()
    }

    /// All stages reachable from `id` along edges, excluding `id`.
    pub fn descendants(&self, id: &str) -> BTreeSet<StageId> {
        self.reach(id, |e| (&e.from, &e.to))
    }

    /// All stages from which `id` is reachable, excluding `id`.
    pub fn ancestors(&self, id: &str) -> BTreeSet<StageId> {
        self.reach(id, |e| (&e.to, &e.from))
    }

    fn reach<'a>(&'a self, id: &str, dir: impl Fn(&'a Edge) -> (&'a StageId, &'a StageId)) -> BTreeSet<StageId> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([id.to_string()]);
        while let Some(cur) = queue.pop_front() {
            for e in &self.edges {
                let (a, b) = dir(e);
                if *a == cur && seen.insert(b.clone()) {
                    queue.push_back(b.clone());
                }
            }
        }
        seen.remove(id);
        seen
    }

    /// Stages in dependency order, ties broken by declaration order.
    /// Returns the stages left over when the graph has a cycle.
    pub fn topo_order(&self) -> Result<Vec<&Stage>, Vec<StageId>> {
        let mut indegree: BTreeMap<&str, usize> = self.stages.iter().map(|s| (s.id.as_str(), 0)).collect();
        for e in &self.edges {
            if let Some(d) = indegree.get_mut(e.to.as_str()) {
                if self.stage(&e.from).is_some() {
                    *d += 1;
                }
            }
        }
        let mut order = Vec::with_capacity(self.stages.len());
        let mut done: BTreeSet<&str> = BTreeSet::new();
        loop {
            let next = self
                .stages
                .iter()
                .find(|s| !done.contains(s.id.as_str()) && indegree[s.id.as_str()] == 0);
            let Some(stage) = next else { break };
            done.insert(&stage.id);
            order.push(stage);
            for e in self.edges.iter().filter(|e| e.from == stage.id) {
                if let Some(d) = indegree.get_mut(e.to.as_str()) {
                    *d = d.saturating_sub(1);
                }
            }
        }
        if order.len() == indegree.len() {
            Ok(order)
        } else {
            Err(self
                .stages
                .iter()
                .filter(|s| !done.contains(s.id.as_str()))
                .map(|s| s.id.clone())
                .collect())
        }
    }

    /// The unique stage with no outgoing edges, if any.
    pub fn terminal_stages(&self) -> Vec<&Stage> {
        self.stages
            .iter()
            .filter(|s| !self.edges.iter().any(|e| e.from == s.id))
            .collect()
    }

    pub fn report_stage(&self) -> Option<&Stage> {
        match &self.report {
            Some(id) => self.stage(id),
            None => match self.terminal_stages().as_slice() {
                [only] => Some(only),
                _ => None,
            },
        }
    }

    /// Names of run inputs the pipeline reads.
    pub fn required_inputs(&self) -> BTreeSet<String> {
        let mut names = BTreeSet::new();
        for stage in &self.stages {
            for placeholder in &stage.template.required_bindings {
                if let Some(BindingSource::Input(name)) = stage.source_of(placeholder) {
                    names.insert(name);
                }
            }
            match &stage.fanout {
                FanoutPolicy::PerSegment { source, .. } => {
                    names.insert(source.clone());
                }
                FanoutPolicy::PerDimension {
                    from_input: Some(name), ..
                } => {
                    names.insert(name.clone());
                }
                _ => {}
            }
        }
        names
    }
}

/// Checks every structural invariant and returns all violations found.
pub fn validate_pipeline(spec: &PipelineSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if spec.stages.is_empty() {
        out.push(Violation::EmptyPipeline);
        return out;
    }

    let mut ids = BTreeSet::new();
    for s in &spec.stages {
        if !ids.insert(s.id.as_str()) {
            out.push(Violation::DuplicateStage { stage: s.id.clone() });
        }
    }
    for e in &spec.edges {
        if !ids.contains(e.from.as_str()) || !ids.contains(e.to.as_str()) {
            out.push(Violation::DanglingEdge {
                from: e.from.clone(),
                to: e.to.clone(),
            });
        }
    }
    let acyclic = match spec.topo_order() {
        Ok(_) => true,
        Err(stages) => {
            out.push(Violation::Cycle { stages });
            false
        }
    };
    let terminals = spec.terminal_stages();
    if terminals.len() != 1 {
        out.push(Violation::TerminalStages { count: terminals.len() });
    }
    if let Some(report) = &spec.report {
        if !terminals.iter().any(|s| &s.id == report) {
            out.push(Violation::ReportNotTerminal { stage: report.clone() });
        }
    }

    for stage in &spec.stages {
        validate_stage(spec, stage, acyclic, &mut out);
    }
    out
}

fn validate_stage(spec: &PipelineSpec, stage: &Stage, acyclic: bool, out: &mut Vec<Violation>) {
    let sid = || stage.id.clone();
    match scan_placeholders(&stage.template.text) {
        Err(e) => out.push(Violation::MalformedTemplate {
            stage: sid(),
            detail: e.to_string(),
        }),
        Ok(found) => {
            for name in found.difference(&stage.template.required_bindings) {
                out.push(Violation::UnboundPlaceholder {
                    stage: sid(),
                    name: name.clone(),
                });
            }
            for name in stage.template.required_bindings.difference(&found) {
                out.push(Violation::UnusedBinding {
                    stage: sid(),
                    name: name.clone(),
                });
            }
        }
    }

    // only meaningful once the graph is a DAG
    let upstream = if acyclic {
        spec.ancestors(&stage.id)
    } else {
        BTreeSet::new()
    };
    let has_fanout = stage.fanout != FanoutPolicy::None;
    for name in &stage.template.required_bindings {
        match stage.source_of(name) {
            None => out.push(Violation::BadSource {
                stage: sid(),
                name: name.clone(),
                source: stage.sources.get(name).cloned().unwrap_or_default(),
            }),
            Some(BindingSource::Stage(up)) | Some(BindingSource::StageCount(up)) => {
                if acyclic && !upstream.contains(&up) {
                    out.push(Violation::SourceNotUpstream {
                        stage: sid(),
                        name: name.clone(),
                        upstream: up,
                    });
                }
            }
            Some(BindingSource::SlotIndex) | Some(BindingSource::SlotItem) if !has_fanout => {
                out.push(Violation::SlotSourceWithoutFanout {
                    stage: sid(),
                    name: name.clone(),
                });
            }
            Some(_) => {}
        }
    }
    for (name, source) in &stage.sources {
        if !stage.template.required_bindings.contains(name) && BindingSource::parse(source).is_none() {
            out.push(Violation::BadSource {
                stage: sid(),
                name: name.clone(),
                source: source.clone(),
            });
        }
    }

    if let FanoutPolicy::PerDimension {
        dimensions,
        from_stage,
        from_input,
    } = &stage.fanout
    {
        let declared =
            usize::from(!dimensions.is_empty()) + usize::from(from_stage.is_some()) + usize::from(from_input.is_some());
        if declared == 0 {
            out.push(Violation::EmptyFanoutDimensions { stage: sid() });
        } else if declared > 1 {
            out.push(Violation::AmbiguousFanoutSource { stage: sid() });
        }
        if let Some(up) = from_stage {
            let is_schema = spec
                .stage(up)
                .is_some_and(|s| s.contract.kind == ContractKind::ElementsSchema);
            if !is_schema || (acyclic && !upstream.contains(up)) {
                out.push(Violation::FanoutSourceNotSchema {
                    stage: sid(),
                    upstream: up.clone(),
                });
            }
        }
        if dimensions.iter().any(|d| d.trim().is_empty()) {
            out.push(Violation::EmptyFanoutDimensions { stage: sid() });
        }
    }

    if stage.runs == 0 {
        out.push(Violation::ZeroRuns { stage: sid() });
    }
    let ann = stage.annotation;
    if !(1..=5).contains(&ann.depth) || ann.autonomy > 3 {
        out.push(Violation::AnnotationOutOfRange { stage: sid() });
    }
    let c = &stage.contract;
    if c.enum_range.is_some_and(|r| !r.is_well_formed() || r.lo < 0) {
        out.push(Violation::InvalidRange {
            stage: sid(),
            field: "enum_range",
        });
    }
    if c.score_range.is_some_and(|r| !r.is_well_formed()) {
        out.push(Violation::InvalidRange {
            stage: sid(),
            field: "score_range",
        });
    }
    if c.abstention
        .as_ref()
        .is_some_and(|a| a.enabled && a.marker.trim().is_empty())
    {
        out.push(Violation::EmptyAbstentionMarker { stage: sid() });
    }
    if c.repeated && c.kind != ContractKind::ElementReport {
        out.push(Violation::RepeatedNonReport { stage: sid() });
    }
}
