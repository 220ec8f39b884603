use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Per-cell summary of evidence counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single run.
    pub sd: f64,
    pub zero_runs: usize,
    pub counts: Vec<i64>,
}

impl CellStats {
    pub fn runs(&self) -> usize {
        self.counts.len()
    }
}

pub fn summarize_counts(counts: &[i64]) -> Result<CellStats, HarnessError> {
    if counts.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    let sd = if counts.len() == 1 {
        0.0
    } else {
        let ss: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    };
    Ok(CellStats {
        mean,
        sd,
        zero_runs: counts.iter().filter(|&&c| c == 0).count(),
        counts: counts.to_vec(),
    })
}
