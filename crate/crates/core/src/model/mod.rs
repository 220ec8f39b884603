pub mod params;
pub mod pipeline;
pub mod template;

pub use params::{Effort, ParamsError, RunParams};
pub use pipeline::{
    validate_pipeline, AbstentionPolicy, BindingSource, ContractKind, Edge, FanoutPolicy, IntRange, OutputContract,
    PipelineSpec, Segmenter, SpecLoadError, Stage, StageAnnotation, StageId, StageKind, Violation,
};
pub use template::{render_prompt, scan_placeholders, PromptTemplate, TemplateError};
