//! The metrics JSON document written by training runs and `eval`.

use rescnn_core::error::Result;
use rescnn_core::eval::{ClassMetrics, MetricsReport};
use serde::{Deserialize, Serialize};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub dataset: String,
    pub part: String,
    pub seed: u64,
    pub n_examples: u64,
    pub accuracy: f64,
    pub positive_class: usize,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: Vec<Vec<u64>>,
    pub checkpoint_digest: String,
    /// Wall-clock stamp; the only non-deterministic field.
    pub generated_unix_ms: u128,
}

impl MetricsDocument {
    pub fn new(
        dataset: &str,
        part: &str,
        seed: u64,
        report: &MetricsReport,
        checkpoint_digest: String,
    ) -> Self {
        MetricsDocument {
            dataset: dataset.to_string(),
            part: part.to_string(),
            seed,
            n_examples: report.n_examples,
            accuracy: report.accuracy,
            positive_class: report.positive_class,
            sensitivity: report.sensitivity,
            specificity: report.specificity,
            per_class: report.per_class.clone(),
            confusion: report.confusion.clone(),
            checkpoint_digest,
            generated_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
        }
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
