//! Corpus ingestion and multi-run coding of papers against the instrument.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    aggregate_runs, validate_record, AggregateError, CodedRecord, DispersionReport, Instrument, ItemKind, RecordSource,
    RecordViolation,
};
use crate::codec::Artifact;
use crate::model::{PipelineSpec, RunParams};
use crate::orchestrator::{Orchestrator, OrchestratorError, RunOptions};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub record_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    /// Relative to the manifest's directory.
    pub fulltext_path: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("record {record_id}: {source}")]
    Run {
        record_id: String,
        source: OrchestratorError,
    },
    #[error("record {record_id}: {source}")]
    Aggregate { record_id: String, source: AggregateError },
}

impl CorpusError {
    pub fn code(&self) -> &'static str {
        match self {
            CorpusError::Io { .. } => "io",
            CorpusError::Manifest(_) => "manifest",
            CorpusError::Run { source, .. } => source.code(),
            CorpusError::Aggregate { .. } => "aggregate",
        }
    }
}

fn io_err(path: &Path, e: impl ToString) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Reads a `record_id,title,abstract,fulltext_path` CSV manifest.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>, CorpusError> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut out: Vec<ManifestRecord> = Vec::new();
    for rec in rdr.deserialize() {
        let rec: ManifestRecord = rec.map_err(|e| CorpusError::Manifest(e.to_string()))?;
        if out.iter().any(|r| r.record_id == rec.record_id) {
            return Err(CorpusError::Manifest(format!("duplicate record_id {}", rec.record_id)));
        }
        out.push(rec);
    }
    Ok(out)
}

/// The instrument as plain text for a coding prompt.
pub fn render_questionnaire(instrument: &Instrument) -> String {
    let mut out = String::new();
    for item in &instrument.items {
        let kind = match item.kind {
            ItemKind::SelectOne => "choose one",
            ItemKind::Multiselect => "choose any",
            ItemKind::OpenText => "free text",
        };
        let reason = if item.requires_reason { "; reason required" } else { "" };
        out.push_str(&format!("{} {} ({kind}{reason})\n", item.id, item.title));
        for o in &item.options {
            out.push_str(&format!("  {} = {}\n", o.code, o.label));
        }
    }
    out
}

pub fn coding_pipeline() -> PipelineSpec {
    PipelineSpec::from_toml_str(include_str!("../../pipelines/coding.toml")).expect("bundled pipeline parses")
}

#[derive(Debug, Clone, Serialize)]
pub struct PaperCoding {
    pub record_id: String,
    pub run_id: String,
    pub runs: Vec<CodedRecord>,
    pub consensus: CodedRecord,
    pub dispersion: DispersionReport,
    pub violations: BTreeMap<String, Vec<RecordViolation>>,
}

/// Codes every manifest record with `runs` repetitions, writing
/// `<out>/<record_id>/run-<n>.json`, `consensus.json` and `dispersion.json`.
pub fn code_corpus(
    orch: &Orchestrator,
    manifest: impl AsRef<Path>,
    instrument: &Instrument,
    params: &RunParams,
    runs: u32,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PaperCoding>, CorpusError> {
    let manifest = manifest.as_ref();
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let records = load_manifest(manifest)?;
    let mut spec = coding_pipeline();
    spec.stages[0].runs = runs.max(1);
    let questionnaire = render_questionnaire(instrument);
    let mut results = Vec::new();
    for rec in records {
        let text_path = base.join(&rec.fulltext_path);
        let paper = std::fs::read_to_string(&text_path).map_err(|e| io_err(&text_path, e))?;
        let inputs = BTreeMap::from([
            ("instrument".to_string(), questionnaire.clone()),
            ("title".to_string(), rec.title.clone()),
            ("abstract".to_string(), rec.abstract_text.clone()),
            ("paper".to_string(), paper.clone()),
        ]);
        let run_id = format!("code-{}", rec.record_id);
        let wrap = |source| CorpusError::Run {
            record_id: rec.record_id.clone(),
            source,
        };
        let state = if orch.store().exists(&run_id) {
            orch.resume(&run_id, Some(&spec)).map_err(wrap)?
        } else {
            let opts = RunOptions {
                run_id: Some(run_id.clone()),
                ..Default::default()
            };
            orch.run(&spec, inputs, params.clone(), opts).map_err(wrap)?
        };
        let mut run_records = Vec::new();
        for (slot, a) in state.artifacts.get("code").into_iter().flatten() {
            if let Artifact::AnswerRecord { answers } = a {
                run_records.push(CodedRecord {
                    paper_id: rec.record_id.clone(),
                    answers: answers.clone(),
                    source: RecordSource::ModelRun { run: slot + 1 },
                    model_meta: Some(params.clone()),
                });
            }
        }
        let (consensus, dispersion) =
            aggregate_runs(instrument, &run_records).map_err(|source| CorpusError::Aggregate {
                record_id: rec.record_id.clone(),
                source,
            })?;
        let mut violations = BTreeMap::new();
        for r in &run_records {
            if let RecordSource::ModelRun { run } = r.source {
                let v = validate_record(instrument, r, Some(&paper));
                if !v.is_empty() {
                    violations.insert(format!("run-{run}"), v);
                }
            }
        }
        let dir = out_dir.as_ref().join(&rec.record_id);
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        for r in &run_records {
            if let RecordSource::ModelRun { run } = r.source {
                write_json(&dir.join(format!("run-{run}.json")), r)?;
            }
        }
        write_json(&dir.join("consensus.json"), &consensus)?;
        write_json(&dir.join("dispersion.json"), &dispersion)?;
        if !violations.is_empty() {
            write_json(&dir.join("violations.json"), &violations)?;
        }
        results.push(PaperCoding {
            record_id: rec.record_id,
            run_id,
            runs: run_records,
            consensus,
            dispersion,
            violations,
        });
    }
    Ok(results)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CorpusError> {
    let text = serde_json::to_string_pretty(value).expect("record serializes") + "\n";
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Coded records under `dir` (recursively), excluding individual model runs.
/// Sorted by paper id.
pub fn load_coded_dir(dir: impl AsRef<Path>) -> Result<Vec<CodedRecord>, CorpusError> {
    let mut files = Vec::new();
    collect_json(dir.as_ref(), &mut files)?;
    let mut out = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(|e| io_err(&f, e))?;
        // dispersion and violation files live beside records; skip anything else
        let Ok(rec) = serde_json::from_str::<CodedRecord>(&text) else {
            continue;
        };
        if !matches!(rec.source, RecordSource::ModelRun { .. }) {
            out.push(rec);
        }
    }
    out.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
    Ok(out)
}

fn collect_json(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    let rd = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut entries: Vec<PathBuf> = rd.filter_map(Result::ok).map(|e| e.path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_json(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
    Ok(())
}
