use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Effort {
    Low,
    Medium,
    High,
}

impl Effort {
    pub fn as_str(self) -> &'static str {
        match self {
            Effort::Low => "low",
            Effort::Medium => "medium",
            Effort::High => "high",
        }
    }
}

impl std::str::FromStr for Effort {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(Effort::Low),
            "medium" => Ok(Effort::Medium),
            "high" => Ok(Effort::High),
            other => Err(format!("unknown effort level `{other}` (expected low|medium|high)")),
        }
    }
}

/// Model invocation parameters carried with every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_effort: Option<Effort>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verbosity: Option<Effort>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("model identifier is empty")]
    EmptyModel,
    #[error("temperature {0} outside [0, 2]")]
    Temperature(f64),
}

impl RunParams {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            temperature: None,
            reasoning_effort: None,
            verbosity: None,
            max_output: None,
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = Some(t);
        self
    }

    pub fn with_reasoning_effort(mut self, e: Effort) -> Self {
        self.reasoning_effort = Some(e);
        self
    }

    pub fn with_verbosity(mut self, v: Effort) -> Self {
        self.verbosity = Some(v);
        self
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if self.model.trim().is_empty() {
            return Err(ParamsError::EmptyModel);
        }
        match self.temperature {
            Some(t) if !(0.0..=2.0).contains(&t) || t.is_nan() => Err(ParamsError::Temperature(t)),
            _ => Ok(()),
        }
    }
}
