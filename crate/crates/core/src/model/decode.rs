use serde::{Deserialize, Serialize};

use super::DualLogits;
use crate::taxonomy::{SeverityIndex, TypeVector, NUM_SEVERITIES, NUM_TYPES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub severity: SeverityIndex,
    pub severity_probs: [f64; NUM_SEVERITIES],
    pub type_probs: [f64; NUM_TYPES],
    pub types: TypeVector,
}

pub fn softmax<const N: usize>(logits: &[f64; N]) -> [f64; N] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|x| (x - max).exp());
    let sum: f64 = exps.iter().sum();
    exps.map(|e| e / sum)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax/argmax for severity (ties go to the lower index) and
/// thresholded sigmoids for types.
pub fn decode(logits: &DualLogits, threshold: f64) -> Prediction {
    let severity_probs = softmax(&logits.severity_logits);
    let mut best = 0;
    for (i, p) in severity_probs.iter().enumerate().skip(1) {
        if *p > severity_probs[best] {
            best = i;
        }
    }
    let type_probs = logits.type_logits.map(sigmoid);
    let types = TypeVector::from_bits(type_probs.map(|p| p >= threshold));
    Prediction {
        severity: SeverityIndex::new(best).expect("argmax within range"),
        severity_probs,
        type_probs,
        types,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dl(s: [f64; 4], t: [f64; 10]) -> DualLogits {
        DualLogits {
            severity_logits: s,
            type_logits: t,
        }
    }

    #[test]
    fn dominant_logit() {
        let p = decode(&dl([0.0, 0.0, 0.0, 10.0], [0.0; 10]), 0.5);
        assert_eq!(p.severity.index(), 3);
        assert!(p.severity_probs[3] > 0.999);
        // sigmoid(0) = 0.5 meets a 0.5 threshold.
        assert_eq!(p.types.count_ones(), 10);
    }

    #[test]
    fn negative_types_and_ties() {
        let p = decode(&dl([2.0; 4], [-10.0; 10]), 0.5);
        assert_eq!(p.types, TypeVector::zeros());
        assert_eq!(p.severity.index(), 0);
        assert!(p.severity_probs.iter().all(|x| (x - 0.25).abs() < 1e-15));
        let p = decode(&dl([0.0, 3.0, 3.0, 1.0], [0.0; 10]), 0.5);
        assert_eq!(p.severity.index(), 1);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.3) + sigmoid(-0.3) - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn shift_invariance_and_threshold(
            s in prop::array::uniform4(-50.0f64..50.0),
            t in prop::array::uniform10(-20.0f64..20.0),
            shift in -100.0f64..100.0,
            threshold in 0.01f64..0.99,
        ) {
            let p = decode(&dl(s, t), threshold);
            let q = decode(&dl(s.map(|x| x + shift), t), threshold);
            prop_assert_eq!(p.severity, q.severity);
            prop_assert!((p.severity_probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for j in 0..10 {
                prop_assert_eq!(p.types.get(j), p.type_probs[j] >= threshold);
            }
        }
    }
}
