//! Error line and exit-code mapping.

use leash_core::codebook::{CorpusError, InstrumentError};
use leash_core::harness::HarnessError;
use leash_core::indices::IndexError;
use leash_core::model::SpecLoadError;
use leash_core::orchestrator::OrchestratorError;
use serde::Serialize;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_PROVIDER: u8 = 3;
pub const EXIT_CHECKPOINT: u8 = 4;
pub const EXIT_CONFIG: u8 = 5;
pub const EXIT_OTHER: u8 = 1;

#[derive(Debug, Serialize)]
pub struct CliError {
    pub code: String,
    pub message: String,
    #[serde(skip)]
    pub exit: u8,
}

impl CliError {
    pub fn new(exit: u8, code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
            exit,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, "config", message)
    }

    pub fn validation(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(EXIT_VALIDATION, code, message)
    }

    /// Machine-readable single line for stderr.
    pub fn line(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

/// Exit status for an error code from the core library.
pub fn exit_for(code: &str) -> u8 {
    match code {
        "invalid-spec" | "invalid-params" | "missing-input" | "render-error" | "bad-fanout" | "report-mismatch"
        | "missing-schema" | "key-mismatch" | "empty-input" => EXIT_VALIDATION,
        "replay-miss" | "provider-error" | "timeout" | "connection" | "credentials" | "invalid-request"
        | "cassette" | "stage-failed" | "contract-violation" => EXIT_PROVIDER,
        "not-awaiting"
        | "unknown-stage"
        | "unknown-run"
        | "run-exists"
        | "digest-mismatch"
        | "edit-requires-artifact" => EXIT_CHECKPOINT,
        "config" => EXIT_CONFIG,
        _ => EXIT_OTHER,
    }
}

impl From<OrchestratorError> for CliError {
    fn from(e: OrchestratorError) -> Self {
        let code = e.code();
        Self::new(exit_for(code), code, e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Orchestrator(o) => o.into(),
            other => {
                let code = other.code();
                Self::new(exit_for(code), code, other.to_string())
            }
        }
    }
}

impl From<SpecLoadError> for CliError {
    fn from(e: SpecLoadError) -> Self {
        Self::validation("invalid-spec", e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Run { source, .. } => source.into(),
            other => Self::new(EXIT_VALIDATION, other.code(), other.to_string()),
        }
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        Self::validation(e.code(), e.to_string())
    }
}

impl From<InstrumentError> for CliError {
    fn from(e: InstrumentError) -> Self {
        Self::config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(EXIT_OTHER, "io", e.to_string())
    }
}
