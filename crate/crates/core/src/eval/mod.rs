//! Evaluation: metrics, curves, error-text word counts and report artifacts.

pub mod curves;
pub mod metrics;
pub mod render;
pub mod words;

use serde::{Deserialize, Serialize};

pub use curves::{pr_points, roc_points, Curve};
pub use metrics::{severity_metrics, type_metrics, SeverityReport, TypeReport};
pub use render::render_artifacts;
pub use words::{misclassified_word_frequencies, ErrorScope, WordFrequencyTable};

use crate::dataset::LabeledExample;
use crate::model::{decode, DualHeadModel, Prediction};
use crate::taxonomy::SEVERITY_NAMES;
use crate::Result;

pub const METRICS_SCHEMA_VERSION: u64 = 1;
pub const DEFAULT_TOP_WORDS: usize = 100;

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u64,
    pub split: String,
    pub sample_count: usize,
    pub threshold: f64,
    pub severity_names: Vec<String>,
    pub type_names: Vec<String>,
    pub severity: SeverityReport,
    pub types: TypeReport,
    pub misclassified_words: WordFrequencyTable,
    /// Unweighted mean ROC AUC over types with both classes present.
    pub mean_roc_auc: Option<f64>,
    pub mean_pr_auc: Option<f64>,
}

fn mean_defined(curves: &[Curve]) -> Option<f64> {
    let defined: Vec<f64> = curves.iter().filter_map(|c| c.auc).collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

impl EvaluationReport {
    pub fn new(
        split: impl Into<String>,
        threshold: f64,
        type_names: Vec<String>,
        severity: SeverityReport,
        types: TypeReport,
        misclassified_words: WordFrequencyTable,
    ) -> Self {
        let sample_count = severity.confusion.iter().flatten().sum::<u64>() as usize;
        EvaluationReport {
            schema_version: METRICS_SCHEMA_VERSION,
            split: split.into(),
            sample_count,
            threshold,
            severity_names: SEVERITY_NAMES.iter().map(|s| s.to_string()).collect(),
            type_names,
            mean_roc_auc: mean_defined(&types.roc),
            mean_pr_auc: mean_defined(&types.pr),
            severity,
            types,
            misclassified_words,
        }
    }
}

/// Batched inference-mode predictions for `examples`.
pub fn predict(model: &DualHeadModel, examples: &[LabeledExample], batch_size: usize, threshold: f64) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<_> = chunk.iter().map(|e| &e.tokens).collect();
        out.extend(model.forward_refs(&refs)?.iter().map(|l| decode(l, threshold)));
    }
    Ok(out)
}

/// Severity, type and word-frequency reports for predictions over `examples`.
pub fn evaluate_predictions(
    split: &str,
    examples: &[LabeledExample],
    predictions: &[Prediction],
    threshold: f64,
    type_names: Vec<String>,
    scope: ErrorScope,
) -> Result<EvaluationReport> {
    let truth_sev: Vec<_> = examples.iter().map(|e| e.severity).collect();
    let pred_sev: Vec<_> = predictions.iter().map(|p| p.severity).collect();
    let severity = severity_metrics(&truth_sev, &pred_sev)?;
    let truth_types: Vec<_> = examples.iter().map(|e| e.types).collect();
    let pred_types: Vec<_> = predictions.iter().map(|p| p.types).collect();
    let probs: Vec<_> = predictions.iter().map(|p| p.type_probs).collect();
    let types = type_metrics(&truth_types, &pred_types, &probs)?;
    let words = misclassified_word_frequencies(examples, predictions, DEFAULT_TOP_WORDS, scope)?;
    Ok(EvaluationReport::new(split, threshold, type_names, severity, types, words))
}
