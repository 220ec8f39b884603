//! Staged, human-gated LLM pipelines with tagged output contracts, an audit
//! trail, a coding instrument and construct indices.

pub mod codebook;
pub mod codec;
pub mod gateway;
pub mod harness;
pub mod indices;
pub mod model;
pub mod orchestrator;
