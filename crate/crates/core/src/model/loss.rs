//! Combined severity cross-entropy plus mean type binary cross-entropy.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use super::DualLogits;
use crate::error::check_len;
use crate::taxonomy::{SeverityIndex, TypeVector, NUM_SEVERITIES, NUM_TYPES};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub severity_loss: f64,
    pub type_loss: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(severity_loss: f64, type_loss: f64) -> Self {
        LossBreakdown {
            severity_loss,
            type_loss,
            total: severity_loss + type_loss,
        }
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `-[y ln σ(x) + (1-y) ln(1-σ(x))]` without forming σ(x).
pub(crate) fn bce_with_logit(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
}

/// Batch-mean losses over per-sample `(logits, severity, types)` triples.
pub fn combined_loss(
    logits: &[DualLogits],
    severities: &[SeverityIndex],
    types: &[TypeVector],
) -> Result<LossBreakdown> {
    check_len(logits.len(), severities.len())?;
    check_len(logits.len(), types.len())?;
    if logits.is_empty() {
        return Err(Error::LengthMismatch { left: 0, right: 1 });
    }
    let n = logits.len() as f64;
    let mut severity_sum = 0.0;
    let mut type_sum = 0.0;
    for ((l, s), t) in logits.iter().zip(severities).zip(types) {
        severity_sum += log_sum_exp(&l.severity_logits) - l.severity_logits[s.index()];
        let per_type: f64 = l
            .type_logits
            .iter()
            .zip(t.bits())
            .map(|(x, y)| bce_with_logit(*x, if *y { 1.0 } else { 0.0 }))
            .sum();
        type_sum += per_type / NUM_TYPES as f64;
    }
    Ok(LossBreakdown::new(severity_sum / n, type_sum / n))
}

/// Loss tensors for a `(batch, 14)` logit tensor; all three are scalars on the graph.
pub struct LossTensors {
    pub severity: Tensor,
    pub types: Tensor,
    pub total: Tensor,
}

/// Differentiable form of [`combined_loss`].
///
/// `severity_targets` is `(batch,)` u32 and `type_targets` is `(batch, 10)` in
/// the logits' dtype.
pub fn combined_loss_tensor(
    logits: &Tensor,
    severity_targets: &Tensor,
    type_targets: &Tensor,
) -> Result<LossTensors> {
    let (_, width) = logits.dims2()?;
    if width != NUM_SEVERITIES + NUM_TYPES {
        return Err(Error::Shape(format!("expected 14 logits per row, got {width}")));
    }
    let severity_logits = logits.narrow(1, 0, NUM_SEVERITIES)?;
    let type_logits = logits.narrow(1, NUM_SEVERITIES, NUM_TYPES)?;
    let severity = candle_nn::loss::cross_entropy(&severity_logits, severity_targets)?;
    let stable = type_logits
        .relu()?
        .sub(&type_logits.mul(type_targets)?)?
        .add(&(type_logits.abs()?.neg()?.exp()? + 1.0)?.log()?)?;
    let types = stable.mean_all()?;
    let total = severity.add(&types)?;
    Ok(LossTensors {
        severity,
        types,
        total,
    })
}

/// Target tensors for a labelled batch.
pub fn target_tensors(
    severities: &[SeverityIndex],
    types: &[TypeVector],
    dtype: DType,
    device: &candle_core::Device,
) -> Result<(Tensor, Tensor)> {
    check_len(severities.len(), types.len())?;
    let sev: Vec<u32> = severities.iter().map(|s| s.index() as u32).collect();
    let bits: Vec<f32> = types.iter().flat_map(|t| t.as_f32()).collect();
    Ok((
        Tensor::from_vec(sev, severities.len(), device)?,
        Tensor::from_vec(bits, (types.len(), NUM_TYPES), device)?.to_dtype(dtype)?,
    ))
}
