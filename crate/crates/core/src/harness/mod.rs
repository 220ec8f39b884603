//! Experiment harnesses: the abstention grid and the regime comparison.

pub mod concordance;
pub mod grid;
pub mod mapping;
pub mod regimes;
pub mod stats;

use thiserror::Error;

pub use concordance::{concordance, concordance_csv, Concordance, ElementDelta};
pub use grid::{
    grid_csv, run_abstention_grid, standard_grid, CellResult, Exp1Config, GridCondition, ABSTENTION_MARKER,
    ABSTENTION_SENTENCE,
};
pub use mapping::{parse_mapping, uncovered_elements, unknown_targets, MappingRow};
pub use regimes::{
    regime_report, run_regime, with_approved_schema, ApprovalPolicy, Regime, RegimeOutcome, RegimeReport, SchemaSeed,
};
pub use stats::{summarize_counts, CellStats};

use crate::orchestrator::OrchestratorError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("empty-input: no counts to summarize")]
    EmptyInput,
    #[error("key-mismatch: only in first {only_a:?}, only in second {only_b:?}")]
    KeyMismatch { only_a: Vec<String>, only_b: Vec<String> },
    #[error("report-mismatch: schema has {expected} elements, run produced {found} reports")]
    ReportMismatch { expected: usize, found: usize },
    #[error("missing-schema: run has no element schema")]
    MissingSchema,
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
}

impl HarnessError {
    pub fn code(&self) -> &'static str {
        match self {
            HarnessError::EmptyInput => "empty-input",
            HarnessError::KeyMismatch { .. } => "key-mismatch",
            HarnessError::ReportMismatch { .. } => "report-mismatch",
            HarnessError::MissingSchema => "missing-schema",
            HarnessError::Config(_) => "config",
            HarnessError::Orchestrator(e) => e.code(),
        }
    }
}
