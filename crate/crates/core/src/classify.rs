//! One-shot classification of raw description text, shared by the CLI and the
//! HTTP service.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::model::{decode, DualHeadModel, Prediction};
use crate::taxonomy::{SeverityIndex, NUM_SEVERITIES, SEVERITY_NAMES};
use crate::{Error, Result};

pub const MAX_DESCRIPTION_CHARS: usize = 10_000;
pub const DEFAULT_MAX_LEN: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl ClassifyRequest {
    pub fn validate(&self) -> Result<()> {
        if self.description.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let chars = self.description.chars().count();
        if chars > MAX_DESCRIPTION_CHARS {
            return Err(Error::InvalidConfig(format!(
                "description has {chars} characters; the limit is {MAX_DESCRIPTION_CHARS}"
            )));
        }
        if let Some(t) = self.threshold {
            check_threshold(t)?;
        }
        Ok(())
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("threshold must lie in (0, 1), got {t}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub name: String,
    pub probability: f64,
    pub predicted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub severity_label: String,
    pub severity_index: u8,
    pub severity_probs: [f64; NUM_SEVERITIES],
    pub types: Vec<TypeScore>,
    pub model_version: String,
    pub latency_ms: f64,
}

/// A loaded model plus the inference settings applied to every request.
#[derive(Debug)]
pub struct Classifier {
    model: DualHeadModel,
    threshold: f64,
    max_len: usize,
}

impl Classifier {
    pub fn new(model: DualHeadModel) -> Self {
        let threshold = model.config().type_threshold;
        Classifier {
            model,
            threshold,
            max_len: DEFAULT_MAX_LEN,
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Classifier::new(DualHeadModel::load(dir)?))
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        self.threshold = threshold;
        Ok(self)
    }

    pub fn with_max_len(mut self, max_len: usize) -> Result<Self> {
        if max_len < 2 {
            return Err(Error::InvalidConfig("max_len must be at least 2".into()));
        }
        self.max_len = max_len;
        Ok(self)
    }

    pub fn model(&self) -> &DualHeadModel {
        &self.model
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn type_names(&self) -> &[String] {
        self.model.type_names()
    }

    pub fn model_version(&self) -> &str {
        self.model.version()
    }

    /// Decoded prediction for `description` at `threshold` (or the default).
    pub fn predict(&self, description: &str, threshold: Option<f64>) -> Result<Prediction> {
        let tokens = self.model.tokenize(description, self.max_len)?;
        let logits = self.model.forward(std::slice::from_ref(&tokens))?;
        Ok(decode(&logits[0], threshold.unwrap_or(self.threshold)))
    }

    pub fn classify(&self, request: &ClassifyRequest) -> Result<ClassifyResponse> {
        let started = Instant::now();
        request.validate()?;
        let prediction = self.predict(&request.description, request.threshold)?;
        Ok(self.response(&prediction, started.elapsed().as_secs_f64() * 1e3))
    }

    fn response(&self, p: &Prediction, latency_ms: f64) -> ClassifyResponse {
        let sev: SeverityIndex = p.severity;
        ClassifyResponse {
            severity_label: SEVERITY_NAMES[sev.index()].to_string(),
            severity_index: sev.index() as u8,
            severity_probs: p.severity_probs,
            types: self
                .type_names()
                .iter()
                .enumerate()
                .map(|(j, name)| TypeScore {
                    name: name.clone(),
                    probability: p.type_probs[j],
                    predicted: p.types.get(j),
                })
                .collect(),
            model_version: self.model_version().to_string(),
            latency_ms,
        }
    }
}
