//! Binary classifier evaluation: precision/recall/F2 at a threshold and
//! AUROC by trapezoidal integration over all distinct score thresholds.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub precision: f64,
    pub recall: f64,
    pub f2: f64,
    pub auroc: f64,
    /// ROC points as (false positive rate, true positive rate), monotone
    /// nondecreasing in both coordinates.
    pub roc: Vec<(f64, f64)>,
    pub threshold: f64,
}

/// F-beta with beta = 2: 5PR / (4P + R); zero when both rates vanish.
pub fn f2_score(precision: f64, recall: f64) -> f64 {
    if precision + recall <= 0.0 {
        return 0.0;
    }
    5.0 * precision * recall / (4.0 * precision + recall)
}

/// Evaluate scores against binary labels. `scores >= threshold` predicts
/// corrupted. Errors when the label set contains a single class (AUROC
/// undefined) or lengths disagree.
pub fn evaluate_classifier(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<ClassifierReport> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("classifier scores contain NaN/Inf".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate(
            "label set contains a single class; AUROC undefined".into(),
        ));
    }

    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let _ = tn;
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = tp as f64 / (tp + fn_) as f64;

    // ROC sweep over descending distinct scores (Fawcett's algorithm), so
    // tied scores contribute diagonal segments and the trapezoid rule equals
    // the pairwise-ranking estimator with half-credit ties.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut roc = Vec::with_capacity(scores.len() + 2);
    let (mut tpc, mut fpc) = (0usize, 0usize);
    let mut prev = f64::INFINITY;
    for &i in &order {
        if scores[i] != prev {
            roc.push((fpc as f64 / neg as f64, tpc as f64 / pos as f64));
            prev = scores[i];
        }
        if labels[i] {
            tpc += 1;
        } else {
            fpc += 1;
        }
    }
    roc.push((1.0, 1.0));

    let mut auroc = 0.0;
    for w in roc.windows(2) {
        let (x1, y1) = w[0];
        let (x2, y2) = w[1];
        auroc += (x2 - x1) * (y1 + y2) / 2.0;
    }

    Ok(ClassifierReport {
        precision,
        recall,
        f2: f2_score(precision, recall),
        auroc,
        roc,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn f2_from_reported_rates() {
        let f2 = f2_score(0.604, 0.858);
        assert!((f2 - 0.791).abs() < 1e-3, "F2 {f2}");
    }

    #[test]
    fn f2_identity_matches_definition() {
        for &(p, r) in &[(0.5, 0.5), (0.9, 0.1), (0.3, 0.99)] {
            let direct = 5.0 * p * r / (4.0 * p + r);
            assert!((f2_score(p, r) - direct).abs() < 1e-15);
        }
        assert_eq!(f2_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn perfect_separation_gives_auroc_one() {
        let scores = [0.9, 0.8, 0.95, 0.1, 0.2, 0.05];
        let labels = [true, true, true, false, false, false];
        let r = evaluate_classifier(&scores, &labels, 0.5).unwrap();
        assert!((r.auroc - 1.0).abs() < 1e-12);
        assert!((r.precision - 1.0).abs() < 1e-12);
        assert!((r.recall - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_scores_give_half_auroc() {
        let mut rng = crate::seeds::rng(1);
        let n = 10_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        let r = evaluate_classifier(&scores, &labels, 0.5).unwrap();
        assert!((r.auroc - 0.5).abs() < 0.02, "auroc {}", r.auroc);
    }

    #[test]
    fn auroc_equals_pairwise_ranking_oracle() {
        // brute force: P(score_pos > score_neg) + 0.5 P(tie)
        let mut rng = crate::seeds::rng(2);
        for _ in 0..20 {
            let n = 40;
            let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 8.0).round() / 8.0).collect();
            let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
            let r = evaluate_classifier(&scores, &labels, 0.5).unwrap();
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                if !labels[i] {
                    continue;
                }
                for j in 0..n {
                    if labels[j] {
                        continue;
                    }
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
            assert!((r.auroc - num / den).abs() < 1e-9);
        }
    }

    #[test]
    fn roc_is_monotone() {
        let mut rng = crate::seeds::rng(3);
        let scores: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<bool> = (0..200).map(|i| i % 2 == 0).collect();
        let r = evaluate_classifier(&scores, &labels, 0.5).unwrap();
        for w in r.roc.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn single_class_is_error() {
        let r = evaluate_classifier(&[0.1, 0.9], &[true, true], 0.5);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn low_threshold_favors_recall_under_stochastic_dominance() {
        // corrupted scores stochastically dominate nominal ones
        let mut rng = crate::seeds::rng(4);
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..500 {
            scores.push(0.3 + 0.7 * rng.random::<f64>());
            labels.push(true);
            scores.push(0.6 * rng.random::<f64>());
            labels.push(false);
        }
        let r = evaluate_classifier(&scores, &labels, 0.1).unwrap();
        assert!(r.recall >= r.precision, "recall {} precision {}", r.recall, r.precision);
    }
}
