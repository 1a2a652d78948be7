//! Threshold-sweep ROC and precision-recall curves with trapezoidal AUC.

use serde::{Deserialize, Serialize};

use crate::error::check_len;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    /// `(fpr, tpr)` for ROC, `(recall, precision)` for PR.
    pub points: Vec<[f64; 2]>,
    /// `None` when the ground truth makes the curve undefined.
    pub auc: Option<f64>,
}

impl Curve {
    pub fn undefined() -> Self {
        Curve {
            points: Vec::new(),
            auc: None,
        }
    }
}

fn trapezoid(points: &[[f64; 2]]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]) * (w[0][1] + w[1][1]) / 2.0)
        .sum()
}

/// Cumulative `(tp, fp)` after each group of tied scores, highest score first.
fn sweep(scores: &[f64], labels: &[bool]) -> Vec<(u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let group_ends = order.get(k + 1).is_none_or(|&next| scores[next] != scores[i]);
        if group_ends {
            out.push((tp, fp));
        }
    }
    out
}

fn counts(scores: &[f64], labels: &[bool]) -> Result<(u64, u64)> {
    check_len(scores.len(), labels.len())?;
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite score {bad}")));
    }
    let pos = labels.iter().filter(|l| **l).count() as u64;
    Ok((pos, labels.len() as u64 - pos))
}

pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Curve> {
    let (pos, neg) = counts(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateCurve(format!(
            "ROC needs both classes ({pos} positives, {neg} negatives)"
        )));
    }
    let mut points = vec![[0.0, 0.0]];
    points.extend(
        sweep(scores, labels)
            .into_iter()
            .map(|(tp, fp)| [fp as f64 / neg as f64, tp as f64 / pos as f64]),
    );
    let auc = trapezoid(&points);
    Ok(Curve {
        points,
        auc: Some(auc),
    })
}

/// Precision-recall curve anchored at `(recall 0, precision 1)`.
pub fn pr_points(scores: &[f64], labels: &[bool]) -> Result<Curve> {
    let (pos, _) = counts(scores, labels)?;
    if pos == 0 {
        return Err(Error::DegenerateCurve("PR curve needs at least one positive".into()));
    }
    let mut points = vec![[0.0, 1.0]];
    points.extend(
        sweep(scores, labels)
            .into_iter()
            .map(|(tp, fp)| [tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64]),
    );
    let auc = trapezoid(&points);
    Ok(Curve {
        points,
        auc: Some(auc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(xs: &[u8]) -> Vec<bool> {
        xs.iter().map(|x| *x == 1).collect()
    }

    #[test]
    fn roc_examples() {
        let c = roc_points(&[0.9, 0.8, 0.2, 0.1], &b(&[1, 1, 0, 0])).unwrap();
        assert_eq!(c.auc, Some(1.0));
        assert_eq!(c.points.first(), Some(&[0.0, 0.0]));
        assert_eq!(c.points.last(), Some(&[1.0, 1.0]));
        assert_eq!(roc_points(&[0.3; 5], &b(&[1, 0, 1, 0, 0])).unwrap().auc, Some(0.5));
        assert_eq!(roc_points(&[0.9, 0.4, 0.6], &b(&[1, 0, 1])).unwrap().auc, Some(1.0));
        // One of the two positive-negative pairs is ordered correctly.
        assert_eq!(roc_points(&[0.9, 0.6, 0.4], &b(&[1, 0, 1])).unwrap().auc, Some(0.5));
        assert_eq!(roc_points(&[0.9, 0.8, 0.7, 0.1], &b(&[1, 0, 1, 0])).unwrap().auc, Some(0.75));
    }

    /// Probability that a random positive outscores a random negative, ties counting half.
    fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (_, &si) in scores.iter().enumerate().filter(|(i, _)| labels[*i]) {
            for (_, &sj) in scores.iter().enumerate().filter(|(j, _)| !labels[*j]) {
                pairs += 1.0;
                wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
        wins / pairs
    }

    proptest::proptest! {
        #[test]
        fn roc_auc_matches_pair_count(
            data in proptest::collection::vec((0u8..6, proptest::bool::ANY), 2..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 5.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            proptest::prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let auc = roc_points(&scores, &labels).unwrap().auc.unwrap();
            proptest::prop_assert!((auc - mann_whitney(&scores, &labels)).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(roc_points(&[0.1, 0.2], &b(&[1, 1])), Err(Error::DegenerateCurve(_))));
        assert!(matches!(roc_points(&[0.1, 0.2], &b(&[0, 0])), Err(Error::DegenerateCurve(_))));
        assert!(matches!(pr_points(&[0.1], &b(&[0])), Err(Error::DegenerateCurve(_))));
        assert!(pr_points(&[0.1, 0.7], &b(&[1, 1])).is_ok());
        assert!(matches!(roc_points(&[0.1], &b(&[1, 0])), Err(Error::LengthMismatch { .. })));
        assert!(matches!(roc_points(&[f64::NAN, 0.1], &b(&[1, 0])), Err(Error::Numeric(_))));
    }

    #[test]
    fn pr_perfect_and_monotone_roc() {
        let c = pr_points(&[0.9, 0.8, 0.2, 0.1], &b(&[1, 1, 0, 0])).unwrap();
        assert_eq!(c.auc, Some(1.0));
        let r = roc_points(&[0.5, 0.1, 0.5, 0.7, 0.2, 0.9], &b(&[1, 0, 0, 1, 1, 0])).unwrap();
        for w in r.points.windows(2) {
            assert!(w[1][0] >= w[0][0] && w[1][1] >= w[0][1]);
        }
    }
}
