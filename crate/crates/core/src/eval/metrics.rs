//! Severity (macro-averaged) and type (micro-averaged) metrics.

use serde::{Deserialize, Serialize};

use super::curves::{pr_points, roc_points, Curve};
use crate::error::check_len;
use crate::taxonomy::{SeverityIndex, TypeVector, NUM_SEVERITIES, NUM_TYPES, SEVERITY_NAMES};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityReport {
    /// Rows are true classes, columns predicted classes.
    pub confusion: [[u64; NUM_SEVERITIES]; NUM_SEVERITIES],
    pub accuracy: f64,
    pub per_class_precision: [f64; NUM_SEVERITIES],
    pub per_class_recall: [f64; NUM_SEVERITIES],
    pub per_class_f1: [f64; NUM_SEVERITIES],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Quantities whose denominator was zero and were reported as 0.
    pub zero_division: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeReport {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub hamming_loss: f64,
    pub exact_match_accuracy: f64,
    pub per_type_f1: [f64; NUM_TYPES],
    pub roc: Vec<Curve>,
    pub pr: Vec<Curve>,
    pub cooccurrence: [[u64; NUM_TYPES]; NUM_TYPES],
    /// Type indices whose ground truth lacks positives or negatives (ROC AUC undefined).
    pub degenerate_types: Vec<usize>,
    pub zero_division: Vec<String>,
}

pub(crate) fn ratio(num: u64, den: u64, label: impl FnOnce() -> String, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(label());
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub(crate) fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn severity_metrics(truth: &[SeverityIndex], pred: &[SeverityIndex]) -> Result<SeverityReport> {
    check_len(truth.len(), pred.len())?;
    if truth.is_empty() {
        return Err(Error::LengthMismatch { left: 0, right: 1 });
    }
    let mut confusion = [[0u64; NUM_SEVERITIES]; NUM_SEVERITIES];
    for (t, p) in truth.iter().zip(pred) {
        confusion[t.index()][p.index()] += 1;
    }
    let trace: u64 = (0..NUM_SEVERITIES).map(|c| confusion[c][c]).sum();
    let accuracy = trace as f64 / truth.len() as f64;
    let mut zero_division = Vec::new();
    let mut precision = [0.0; NUM_SEVERITIES];
    let mut recall = [0.0; NUM_SEVERITIES];
    let mut f1s = [0.0; NUM_SEVERITIES];
    for c in 0..NUM_SEVERITIES {
        let tp = confusion[c][c];
        let predicted: u64 = (0..NUM_SEVERITIES).map(|r| confusion[r][c]).sum();
        let actual: u64 = confusion[c].iter().sum();
        precision[c] = ratio(tp, predicted, || format!("precision[{}]", SEVERITY_NAMES[c]), &mut zero_division);
        recall[c] = ratio(tp, actual, || format!("recall[{}]", SEVERITY_NAMES[c]), &mut zero_division);
        f1s[c] = f1(precision[c], recall[c]);
    }
    let mean = |xs: &[f64; NUM_SEVERITIES]| xs.iter().sum::<f64>() / NUM_SEVERITIES as f64;
    Ok(SeverityReport {
        confusion,
        accuracy,
        per_class_precision: precision,
        per_class_recall: recall,
        per_class_f1: f1s,
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f1: mean(&f1s),
        zero_division,
    })
}

pub fn type_metrics(
    truth: &[TypeVector],
    pred_bits: &[TypeVector],
    pred_probs: &[[f64; NUM_TYPES]],
) -> Result<TypeReport> {
    check_len(truth.len(), pred_bits.len())?;
    check_len(truth.len(), pred_probs.len())?;
    if truth.is_empty() {
        return Err(Error::LengthMismatch { left: 0, right: 1 });
    }
    let n = truth.len();
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    let mut per_type = [(0u64, 0u64, 0u64); NUM_TYPES];
    let mut mismatched = 0u64;
    let mut exact = 0u64;
    let mut cooccurrence = [[0u64; NUM_TYPES]; NUM_TYPES];
    for (t, p) in truth.iter().zip(pred_bits) {
        let mut all_correct = true;
        for j in 0..NUM_TYPES {
            match (t.get(j), p.get(j)) {
                (true, true) => {
                    tp += 1;
                    per_type[j].0 += 1;
                }
                (false, true) => {
                    fp += 1;
                    per_type[j].1 += 1;
                }
                (true, false) => {
                    fn_ += 1;
                    per_type[j].2 += 1;
                }
                (false, false) => {}
            }
            if t.get(j) != p.get(j) {
                mismatched += 1;
                all_correct = false;
            }
            if p.get(j) {
                for k in 0..NUM_TYPES {
                    if p.get(k) {
                        cooccurrence[j][k] += 1;
                    }
                }
            }
        }
        exact += all_correct as u64;
    }

    let mut zero_division = Vec::new();
    let micro_precision = ratio(tp, tp + fp, || "micro_precision".into(), &mut zero_division);
    let micro_recall = ratio(tp, tp + fn_, || "micro_recall".into(), &mut zero_division);
    let mut per_type_f1 = [0.0; NUM_TYPES];
    for (j, (tp, fp, fn_)) in per_type.iter().enumerate() {
        let p = ratio(*tp, tp + fp, || format!("precision[type {j}]"), &mut zero_division);
        let r = ratio(*tp, tp + fn_, || format!("recall[type {j}]"), &mut zero_division);
        per_type_f1[j] = f1(p, r);
    }

    let mut roc = Vec::with_capacity(NUM_TYPES);
    let mut pr = Vec::with_capacity(NUM_TYPES);
    let mut degenerate_types = Vec::new();
    for j in 0..NUM_TYPES {
        let scores: Vec<f64> = pred_probs.iter().map(|p| p[j]).collect();
        let labels: Vec<bool> = truth.iter().map(|t| t.get(j)).collect();
        match roc_points(&scores, &labels) {
            Ok(c) => roc.push(c),
            Err(Error::DegenerateCurve(_)) => {
                degenerate_types.push(j);
                roc.push(Curve::undefined());
            }
            Err(e) => return Err(e),
        }
        match pr_points(&scores, &labels) {
            Ok(c) => pr.push(c),
            Err(Error::DegenerateCurve(_)) => pr.push(Curve::undefined()),
            Err(e) => return Err(e),
        }
    }

    Ok(TypeReport {
        micro_precision,
        micro_recall,
        micro_f1: f1(micro_precision, micro_recall),
        hamming_loss: mismatched as f64 / (n * NUM_TYPES) as f64,
        exact_match_accuracy: exact as f64 / n as f64,
        per_type_f1,
        roc,
        pr,
        cooccurrence,
        degenerate_types,
        zero_division,
    })
}
