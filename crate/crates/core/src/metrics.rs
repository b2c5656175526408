//! Thresholded classification metrics, ROC curves and run aggregation.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the evaluated set holds a single class.
    pub auroc: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n: usize,
    /// Set when tp+fp = 0 and precision was reported as 0.
    pub precision_undefined: bool,
}

impl MetricsReport {
    /// Recomputes every thresholded metric from confusion counts.
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize, auroc: Option<f64>) -> Self {
        let n = tp + fp + tn + fn_;
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        MetricsReport {
            accuracy: ratio(tp + tn, n),
            precision,
            recall,
            f1,
            auroc,
            tp,
            fp,
            tn,
            fn_,
            n,
            precision_undefined: tp + fp == 0,
        }
    }

    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Accuracy => Some(self.accuracy),
            Metric::Precision => Some(self.precision),
            Metric::Recall => Some(self.recall),
            Metric::F1 => Some(self.f1),
            Metric::Auroc => self.auroc,
        }
    }
}

/// Metrics for probabilities against 0/1 targets; positive iff `p >= threshold`.
pub fn compute_metrics(probs: &[f64], labels: &[f64], threshold: f64) -> Result<MetricsReport> {
    if probs.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    if probs.len() != labels.len() {
        return Err(Error::shape(
            "compute_metrics",
            format!("{} scores for {} labels", probs.len(), labels.len()),
        ));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y >= 0.5) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let auroc = roc_curve(probs, labels).ok().map(|c| c.area);
    Ok(MetricsReport::from_counts(tp, fp, tn, fn_, auroc))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0,0)` to `(1,1)`, one point per distinct score.
    pub points: Vec<(f64, f64)>,
    pub area: f64,
}

/// Descending threshold sweep with equal scores grouped into one step.
/// The trapezoid area is accumulated in integer half-units, so it equals the
/// Mann-Whitney statistic (ties count one half) up to a single division.
pub fn roc_curve(scores: &[f64], labels: &[f64]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::shape(
            "roc_curve",
            format!("{} scores for {} labels", scores.len(), labels.len()),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numerical("NaN score in ROC input".into()));
    }
    let pos = labels.iter().filter(|&&y| y >= 0.5).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Data(
            "ROC curve needs both classes; AUROC is undefined".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_area: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]].total_cmp(&s) == Ordering::Equal {
            if labels[order[i]] >= 0.5 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let area = twice_area as f64 / (2 * pos * neg) as f64;
    Ok(RocCurve { points, area })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    F1,
    Auroc,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Accuracy,
        Metric::Precision,
        Metric::Recall,
        Metric::F1,
        Metric::Auroc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
            Metric::Auroc => "auroc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample (n-1) standard deviation; 0 for a single value.
    pub std: f64,
}

impl Summary {
    pub fn of(values: Vec<f64>) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Summary { values, mean, std })
    }

    /// `"0.9208±0.0123"`
    pub fn display(&self) -> String {
        format!("{:.4}±{:.4}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub runs: usize,
    /// In `Metric::ALL` order. AUROC is `None` if no run had both classes.
    pub metrics: Vec<(Metric, Option<Summary>)>,
}

impl AggregateReport {
    pub fn of(reports: &[MetricsReport]) -> Self {
        AggregateReport {
            runs: reports.len(),
            metrics: Metric::ALL
                .iter()
                .map(|&m| {
                    (
                        m,
                        Summary::of(reports.iter().filter_map(|r| r.get(m)).collect()),
                    )
                })
                .collect(),
        }
    }

    pub fn get(&self, m: Metric) -> Option<&Summary> {
        self.metrics
            .iter()
            .find(|(k, _)| *k == m)
            .and_then(|(_, s)| s.as_ref())
    }

    pub fn display(&self, m: Metric) -> String {
        self.get(m)
            .map_or_else(|| "undefined".into(), Summary::display)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_confusion_matrix() {
        let r = compute_metrics(&[0.7, 0.3, 0.6, 0.2], &[1.0, 0.0, 0.0, 0.0], 0.5).unwrap();
        assert_eq!((r.tp, r.fp, r.tn, r.fn_, r.n), (1, 1, 2, 0, 4));
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 1.0);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!(!r.precision_undefined);
    }

    #[test]
    fn perfect_separation() {
        let r = compute_metrics(&[0.9, 0.8, 0.1], &[1.0, 1.0, 0.0], 0.5).unwrap();
        for m in Metric::ALL {
            assert_eq!(r.get(m), Some(1.0), "{m:?}");
        }
    }

    #[test]
    fn all_negative_predictions() {
        let r = compute_metrics(&[0.1, 0.2, 0.3], &[1.0, 0.0, 1.0], 0.5).unwrap();
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.precision, 0.0);
        assert!(r.precision_undefined);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn single_class_flags_auroc() {
        let r = compute_metrics(&[0.1, 0.7], &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(r.auroc, None);
        assert_eq!(r.accuracy, 0.5);
        assert!(roc_curve(&[0.1, 0.7], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn roc_examples() {
        let c = roc_curve(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(c.area, 0.75);
        assert_eq!(roc_curve(&[0.5, 0.5], &[1.0, 0.0]).unwrap().area, 0.5);
        let c = roc_curve(&[0.9, 0.6, 0.4, 0.1], &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(c.area, 1.0);
        assert_eq!(
            c.points,
            vec![(0.0, 0.0), (0.0, 0.5), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]
        );
    }

    #[test]
    fn aggregation() {
        let s = Summary::of(vec![0.8; 5]).unwrap();
        assert_eq!(s.std, 0.0);
        let s = Summary::of(vec![0.6, 0.8]).unwrap();
        assert!((s.mean - 0.7).abs() < 1e-12);
        assert!((s.std - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.display(), "0.7000±0.1414");
    }
}
