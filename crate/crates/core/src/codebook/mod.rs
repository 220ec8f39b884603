//! The coding instrument: items, answer validation, screening, aggregation.

pub mod aggregate;
pub mod corpus;
pub mod instrument;
pub mod record;
pub mod screening;
pub mod validate;

pub use aggregate::{aggregate_runs, AggregateError, DispersionReport, ItemDispersion, ItemStatus};
pub use corpus::{
    code_corpus, coding_pipeline, load_coded_dir, load_manifest, render_questionnaire, CorpusError, ManifestRecord,
    PaperCoding,
};
pub use instrument::{Instrument, InstrumentError, Item, ItemKind, ItemOption, NONE_CODE};
pub use record::{parse_answer_record, Answer, AnswerParseError, AnswerValue, CodedRecord, Rationale, RecordSource};
pub use screening::{
    screen, select_primary_use, PrimaryUseError, ScreenError, ScreeningPass, ScreeningRecord, UseCandidate, Verdict,
};
pub use validate::{validate_answer, validate_record, AnswerCheck, AnswerViolation, AnswerWarning, RecordViolation};
