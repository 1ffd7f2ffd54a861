use serde::{Deserialize, Serialize};

use super::TunevalError;

/// Pairwise AUC with half credit for ties, computed through midranks.
pub fn auc_rank(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64, TunevalError> {
    if scores_pos.is_empty() || scores_neg.is_empty() {
        return Err(TunevalError::UndefinedMetric("AUC needs both classes"));
    }
    if scores_pos.iter().chain(scores_neg).any(|s| s.is_nan()) {
        return Err(TunevalError::UndefinedMetric("AUC of NaN scores"));
    }
    let mut all: Vec<(f64, bool)> = scores_pos
        .iter()
        .map(|s| (*s, true))
        .chain(scores_neg.iter().map(|s| (*s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the rank sum keeps midranks integral.
    let mut rank2_pos: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u128;
        rank2_pos += mid2 * all[i..=j].iter().filter(|e| e.1).count() as u128;
        i = j + 1;
    }
    let (np, nn) = (scores_pos.len() as u128, scores_neg.len() as u128);
    let u2 = rank2_pos - np * (np + 1);
    Ok(u2 as f64 / (2 * np * nn) as f64)
}

/// AUC of `scores` against boolean labels.
pub fn auc_labels(scores: &[f64], labels: &[bool]) -> Result<f64, TunevalError> {
    let (pos, neg) = split_by_label(scores, labels);
    auc_rank(&pos, &neg)
}

pub fn split_by_label(scores: &[f64], labels: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (s, l) in scores.iter().zip(labels) {
        if *l {
            pos.push(*s);
        } else {
            neg.push(*s);
        }
    }
    (pos, neg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

/// Undefined ratios come back as NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
    pub kappa: f64,
}

fn ratio(num: i128, den: i128) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    /// Probability ≥ threshold counts as a positive (at-risk) prediction.
    pub fn from_scores(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (s, l) in scores.iter().zip(labels) {
            match (*s >= threshold, *l) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, true) => cm.fn_ += 1,
                (false, false) => cm.tn += 1,
            }
        }
        cm
    }

    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn flagged(&self) -> u64 {
        self.tp + self.fp
    }

    /// Every metric is one exact integer ratio, so it is the correctly
    /// rounded value of the underlying fraction.
    pub fn metrics(&self) -> ClassificationMetrics {
        let (tp, fp, fn_, tn) = (self.tp as i128, self.fp as i128, self.fn_ as i128, self.tn as i128);
        let n = tp + fp + fn_ + tn;
        let chance = (tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn);
        let f1 = if tp + fp == 0 || tp + fn_ == 0 { f64::NAN } else { ratio(2 * tp, 2 * tp + fp + fn_) };
        ClassificationMetrics {
            accuracy: ratio(tp + tn, n),
            sensitivity: ratio(tp, tp + fn_),
            specificity: ratio(tn, tn + fp),
            f1,
            kappa: ratio(n * (tp + tn) - chance, n * n - chance),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_pair_example() {
        assert_eq!(auc_rank(&[0.9, 0.4], &[0.5, 0.1]).unwrap(), 0.75);
        assert_eq!(auc_rank(&[0.9, 0.8], &[0.1]).unwrap(), 1.0);
        assert_eq!(auc_rank(&[0.3, 0.3], &[0.3, 0.3, 0.3]).unwrap(), 0.5);
        assert!(auc_rank(&[], &[0.1]).is_err());
    }

    #[test]
    fn hand_confusion() {
        let m = ConfusionMatrix { tp: 3, fp: 1, fn_: 1, tn: 5 }.metrics();
        assert_eq!(m.accuracy, 0.8);
        assert_eq!(m.sensitivity, 0.75);
        assert!((m.specificity - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(m.f1, 0.75);
        assert!((m.kappa - 0.58333333333).abs() < 1e-9);
    }

    #[test]
    fn perfect_and_all_positive() {
        let m = ConfusionMatrix { tp: 4, fp: 0, fn_: 0, tn: 6 }.metrics();
        assert_eq!([m.accuracy, m.sensitivity, m.specificity, m.f1, m.kappa], [1.0; 5]);
        let m = ConfusionMatrix { tp: 14, fp: 86, fn_: 0, tn: 0 }.metrics();
        assert_eq!((m.sensitivity, m.specificity, m.kappa), (1.0, 0.0, 0.0));
        let m = ConfusionMatrix { tp: 0, fp: 0, fn_: 14, tn: 86 }.metrics();
        assert!(m.f1.is_nan());
        assert_eq!(m.kappa, 0.0);
    }

    #[test]
    fn threshold_rule_is_inclusive() {
        let cm = ConfusionMatrix::from_scores(&[0.5, 0.49], &[true, false], 0.5);
        assert_eq!(cm, ConfusionMatrix { tp: 1, fp: 0, fn_: 0, tn: 1 });
    }

    proptest! {
        #[test]
        fn monotone_transform_keeps_auc(
            s in proptest::collection::vec(-5.0f64..5.0, 2..60),
            labels in proptest::collection::vec(any::<bool>(), 60),
        ) {
            let labels = &labels[..s.len()];
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let a = auc_labels(&s, labels).unwrap();
            let t: Vec<f64> = s.iter().map(|v| (2.0 * v).exp() + 3.0).collect();
            prop_assert_eq!(a, auc_labels(&t, labels).unwrap());
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn kappa_bounded(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50) {
            prop_assume!(tp + fp + fn_ + tn > 0);
            let k = ConfusionMatrix { tp, fp, fn_, tn }.metrics().kappa;
            prop_assert!(k.is_nan() || (-1.0..=1.0).contains(&k));
            if (tp + fp == 0 || fn_ + tn == 0) && tp + fn_ > 0 && fp + tn > 0 {
                prop_assert_eq!(k, 0.0);
            }
        }
    }
}
