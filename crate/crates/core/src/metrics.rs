//! Binary classification metrics with AML as the positive class, plus
//! cross-validation aggregates.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Class;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} labels vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("no samples")]
    Empty,
    #[error("{0} is undefined (zero denominator)")]
    UndefinedMetric(&'static str),
    #[error("AUC needs both classes present")]
    OneClassOnly,
    #[error("non-finite score at position {0}")]
    NonFiniteScore(usize),
    #[error("cross-validation aggregate needs at least 2 folds, got {0}")]
    TooFewFolds(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn ratio(num: u64, den: u64, name: &'static str) -> Result<f64, MetricsError> {
        if den == 0 {
            Err(MetricsError::UndefinedMetric(name))
        } else {
            Ok(num as f64 / den as f64)
        }
    }

    pub fn sensitivity(&self) -> Result<f64, MetricsError> {
        Self::ratio(self.tp, self.tp + self.fn_, "sensitivity")
    }

    pub fn specificity(&self) -> Result<f64, MetricsError> {
        Self::ratio(self.tn, self.tn + self.fp, "specificity")
    }

    pub fn precision(&self) -> Result<f64, MetricsError> {
        Self::ratio(self.tp, self.tp + self.fp, "precision")
    }

    pub fn f1(&self) -> Result<f64, MetricsError> {
        Self::ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_, "f1")
    }

    pub fn accuracy(&self) -> Result<f64, MetricsError> {
        Self::ratio(self.tp + self.tn, self.total(), "accuracy")
    }

    /// The matrix seen with the classes swapped.
    pub fn flipped(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

pub fn confusion(labels: &[Class], predictions: &[Class]) -> Result<ConfusionMatrix, MetricsError> {
    if labels.len() != predictions.len() {
        return Err(MetricsError::LengthMismatch(labels.len(), predictions.len()));
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut m = ConfusionMatrix::default();
    for (&y, &p) in labels.iter().zip(predictions) {
        match (y, p) {
            (Class::Positive, Class::Positive) => m.tp += 1,
            (Class::Positive, Class::Negative) => m.fn_ += 1,
            (Class::Negative, Class::Positive) => m.fp += 1,
            (Class::Negative, Class::Negative) => m.tn += 1,
        }
    }
    Ok(m)
}

/// Metrics in the order the result tables list them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Specificity,
    Sensitivity,
    Auc,
    F1,
    Accuracy,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Specificity,
        Metric::Sensitivity,
        Metric::Auc,
        Metric::F1,
        Metric::Accuracy,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Specificity => "Spec.",
            Metric::Sensitivity => "Sens.",
            Metric::Auc => "AUC",
            Metric::F1 => "F1-score",
            Metric::Accuracy => "Accuracy",
        }
    }
}

/// Undefined metrics are `None`, never 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub auc: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub matrix: ConfusionMatrix,
}

impl MetricsReport {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Specificity => self.specificity,
            Metric::Sensitivity => self.sensitivity,
            Metric::Auc => self.auc,
            Metric::F1 => self.f1,
            Metric::Accuracy => self.accuracy,
        }
    }
}

/// Everything derivable from the confusion matrix; `auc` is left empty.
pub fn scalar_metrics(m: &ConfusionMatrix) -> MetricsReport {
    MetricsReport {
        sensitivity: m.sensitivity().ok(),
        specificity: m.specificity().ok(),
        auc: None,
        f1: m.f1().ok(),
        accuracy: m.accuracy().ok(),
        matrix: *m,
    }
}

/// Full report from labels, hard predictions and ranking scores.
pub fn metrics_report(
    labels: &[Class],
    predictions: &[Class],
    scores: &[f64],
) -> Result<MetricsReport, MetricsError> {
    let m = confusion(labels, predictions)?;
    let mut report = scalar_metrics(&m);
    report.auc = match auc(labels, scores) {
        Ok(a) => Some(a),
        Err(MetricsError::OneClassOnly) => None,
        Err(e) => return Err(e),
    };
    Ok(report)
}

/// Rank-sum AUC with ties credited one half. Equal to the pairwise count
/// divided by `N_pos * N_neg`; the count is kept as an exact integer (twice
/// the tie-credited count) until the final division.
pub fn auc(labels: &[Class], scores: &[f64]) -> Result<f64, MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch(labels.len(), scores.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let n_pos = labels.iter().filter(|c| c.is_positive()).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::OneClassOnly);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut twice_wins: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut pos, mut neg) = (0u128, 0u128);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]].is_positive() {
                pos += 1;
            } else {
                neg += 1;
            }
            i += 1;
        }
        twice_wins += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
    }
    Ok(twice_wins as f64 / (2 * n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub mean: f64,
    /// Sample standard deviation (denominator n - 1).
    pub std: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    /// Folds on which the metric was defined.
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub per_fold: Vec<MetricsReport>,
    /// One entry per metric defined on at least two folds, in table order.
    pub summary: Vec<MetricSummary>,
    /// Metrics computed on all out-of-fold predictions pooled together.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CvSummary {
    pub fn get(&self, metric: Metric) -> Option<&MetricSummary> {
        self.summary.iter().find(|s| s.metric == metric)
    }

    pub fn k(&self) -> usize {
        self.per_fold.len()
    }
}

/// Per-metric mean, sample std and `mean +- 1.96 std / sqrt(n)` clamped to [0, 1].
pub fn summarize(metric: Metric, values: &[f64]) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    let half = 1.96 * std / n.sqrt();
    MetricSummary {
        metric,
        mean,
        std,
        ci95_low: (mean - half).clamp(0.0, 1.0),
        ci95_high: (mean + half).clamp(0.0, 1.0),
        folds: values.len(),
    }
}

pub fn aggregate_cv(per_fold: Vec<MetricsReport>) -> Result<CvSummary, MetricsError> {
    if per_fold.len() < 2 {
        return Err(MetricsError::TooFewFolds(per_fold.len()));
    }
    let mut summary = Vec::new();
    let mut warnings = Vec::new();
    for metric in Metric::ALL {
        let values: Vec<f64> = per_fold.iter().filter_map(|r| r.get(metric)).collect();
        if values.len() < per_fold.len() {
            warnings.push(format!(
                "{} undefined on {} of {} folds",
                metric.label(),
                per_fold.len() - values.len(),
                per_fold.len()
            ));
        }
        if values.len() >= 2 {
            summary.push(summarize(metric, &values));
        }
    }
    Ok(CvSummary {
        per_fold,
        summary,
        pooled: None,
        warnings,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.4}"))
}

/// Plain-text table: rows Spec., Sens., AUC, F1-score, Accuracy; columns for
/// the validation set and the cross-validation mean.
pub fn metrics_table(validation: Option<&MetricsReport>, cv: Option<&CvSummary>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<10} {:>14} {:>10}", "Metrics", "Validation Set", "10CV");
    for metric in Metric::ALL {
        let v = validation.and_then(|r| r.get(metric));
        let c = cv.and_then(|s| s.get(metric)).map(|s| s.mean);
        let _ = writeln!(out, "{:<10} {:>14} {:>10}", metric.label(), cell(v), cell(c));
    }
    out
}

/// Confusion matrix laid out as `TN FN / FP TP`.
pub fn confusion_table(m: &ConfusionMatrix) -> String {
    let w = m.total().to_string().len().max(4);
    format!(
        "TN {:>w$}   FN {:>w$}\nFP {:>w$}   TP {:>w$}\n",
        m.tn, m.fn_, m.fp, m.tp
    )
}

/// Per-metric mean, std and CI table for a cross-validation run.
pub fn cv_table(cv: &CvSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>8} {:>8} {:>19} {:>6}",
        "Metrics", "mean", "std", "95% CI", "folds"
    );
    for s in &cv.summary {
        let _ = writeln!(
            out,
            "{:<10} {:>8.4} {:>8.4} {:>19} {:>6}",
            s.metric.label(),
            s.mean,
            s.std,
            format!("[{:.4}, {:.4}]", s.ci95_low, s.ci95_high),
            s.folds
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Class::{Negative as N, Positive as P};

    /// Pairwise definition, counted as an exact integer.
    fn brute_auc(labels: &[Class], scores: &[f64]) -> f64 {
        let mut twice = 0u128;
        let (mut np, mut nn) = (0u128, 0u128);
        for (i, li) in labels.iter().enumerate() {
            if li.is_positive() {
                np += 1;
            } else {
                nn += 1;
                continue;
            }
            for (j, lj) in labels.iter().enumerate() {
                if lj.is_positive() {
                    continue;
                }
                if scores[i] > scores[j] {
                    twice += 2;
                } else if scores[i] == scores[j] {
                    twice += 1;
                }
            }
        }
        twice as f64 / (2 * np * nn) as f64
    }

    #[test]
    fn confusion_examples() {
        let m = confusion(&[P, N], &[P, N]).unwrap();
        assert_eq!(m, ConfusionMatrix { tp: 1, tn: 1, fp: 0, fn_: 0 });
        let m = confusion(&[P, N, N], &[P, P, P]).unwrap();
        assert_eq!((m.tp, m.fp), (1, 2));
        assert_eq!(confusion(&[P], &[P, N]), Err(MetricsError::LengthMismatch(1, 2)));
    }

    #[test]
    fn reported_training_matrix() {
        let m = ConfusionMatrix { tn: 437, fn_: 1, fp: 0, tp: 1302 };
        let r = scalar_metrics(&m);
        assert_eq!(r.sensitivity, Some(1302.0 / 1303.0));
        assert_eq!(r.specificity, Some(1.0));
        assert_eq!(r.f1, Some(2604.0 / 2605.0));
        assert_eq!(r.accuracy, Some(1739.0 / 1740.0));
        assert_eq!(format!("{:.4}", r.sensitivity.unwrap()), "0.9992");
        assert_eq!(format!("{:.4}", r.f1.unwrap()), "0.9996");
        assert_eq!(format!("{:.4}", r.accuracy.unwrap()), "0.9994");
    }

    #[test]
    fn undefined_sensitivity_is_absent() {
        let m = ConfusionMatrix { tp: 0, fn_: 0, tn: 3, fp: 1 };
        assert_eq!(m.sensitivity(), Err(MetricsError::UndefinedMetric("sensitivity")));
        assert_eq!(scalar_metrics(&m).sensitivity, None);
    }

    #[test]
    fn perfect_matrix() {
        let r = scalar_metrics(&ConfusionMatrix { tp: 5, tn: 7, fp: 0, fn_: 0 });
        for v in [r.sensitivity, r.specificity, r.f1, r.accuracy] {
            assert_eq!(v, Some(1.0));
        }
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[P, P, N, N], &[0.9, 0.8, 0.2, 0.1]).unwrap(), 1.0);
        assert_eq!(auc(&[P, N, P, N], &[0.3; 4]).unwrap(), 0.5);
        let labels = [P, P, N, N];
        let scores = [0.9, 0.4, 0.6, 0.1];
        assert_eq!(brute_auc(&labels, &scores), 0.75);
        assert_eq!(auc(&labels, &scores).unwrap(), 0.75);
        assert_eq!(auc(&[P, P], &[0.1, 0.2]), Err(MetricsError::OneClassOnly));
        assert_eq!(auc(&[P, N], &[0.1, f64::NAN]), Err(MetricsError::NonFiniteScore(1)));
    }

    #[test]
    fn aggregate_identical_folds() {
        let r = scalar_metrics(&ConfusionMatrix { tp: 8, tn: 9, fp: 1, fn_: 2 });
        let cv = aggregate_cv(vec![r.clone(); 5]).unwrap();
        let s = cv.get(Metric::Accuracy).unwrap();
        assert_eq!(s.std, 0.0);
        assert_eq!((s.ci95_low, s.ci95_high), (s.mean, s.mean));
        assert!(cv.get(Metric::Auc).is_none());
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(Metric::Auc, &[0.8, 1.0]);
        assert!((s.mean - 0.9).abs() < 1e-12);
        assert!((s.std - 0.141_421_356_237_309_5).abs() < 1e-12);
        // 0.9 - 1.96 * 0.1414.. / sqrt(2) = 0.9 - 0.196
        assert!((s.ci95_low - 0.704).abs() < 1e-12);
        assert_eq!(s.ci95_high, 1.0);

        // the reported 10-fold AUC mean and std put the upper bound past 1
        let half = 1.96 * 0.0023 / 10f64.sqrt();
        assert!((0.9988 - half - 0.99737).abs() < 1e-5);
        assert!(0.9988 + half > 1.0);
    }

    #[test]
    fn too_few_folds() {
        let r = scalar_metrics(&ConfusionMatrix { tp: 1, tn: 1, fp: 0, fn_: 0 });
        assert_eq!(aggregate_cv(vec![r]).unwrap_err(), MetricsError::TooFewFolds(1));
    }

    #[test]
    fn table_rows_in_report_order() {
        let r = scalar_metrics(&ConfusionMatrix { tn: 437, fn_: 1, fp: 0, tp: 1302 });
        let t = metrics_table(Some(&r), None);
        let labels: Vec<&str> = t.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
        assert_eq!(labels, ["Spec.", "Sens.", "AUC", "F1-score", "Accuracy"]);
        assert!(t.contains("0.9992"));
        assert!(confusion_table(&r.matrix).starts_with("TN  437   FN    1"));
    }

    fn labeled_scores() -> impl Strategy<Value = (Vec<Class>, Vec<f64>)> {
        prop::collection::vec((any::<bool>(), 0u8..12), 2..80).prop_map(|v| {
            let labels = v.iter().map(|(b, _)| Class::from(*b)).collect();
            let scores = v.iter().map(|(_, s)| *s as f64 / 3.0).collect();
            (labels, scores)
        })
    }

    proptest! {
        #[test]
        fn fast_auc_matches_pairs((labels, scores) in labeled_scores()) {
            let counts = crate::dataset::ClassCounts::of(&labels);
            prop_assume!(counts.positive > 0 && counts.negative > 0);
            prop_assert_eq!(auc(&labels, &scores).unwrap(), brute_auc(&labels, &scores));
        }

        #[test]
        fn auc_monotone_invariant((labels, scores) in labeled_scores()) {
            let counts = crate::dataset::ClassCounts::of(&labels);
            prop_assume!(counts.positive > 0 && counts.negative > 0);
            let moved: Vec<f64> = scores.iter().map(|s| (s * 2.0).exp() - 5.0).collect();
            prop_assert_eq!(auc(&labels, &scores).unwrap(), auc(&labels, &moved).unwrap());
        }

        #[test]
        fn label_flip_symmetry((labels, scores) in labeled_scores()) {
            let counts = crate::dataset::ClassCounts::of(&labels);
            prop_assume!(counts.positive > 0 && counts.negative > 0);
            let flipped: Vec<Class> = labels.iter().map(|c| c.flipped()).collect();
            let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
            prop_assert_eq!(auc(&labels, &scores).unwrap(), auc(&flipped, &negated).unwrap());

            let preds: Vec<Class> = scores.iter().map(|&s| Class::from(s >= 2.0)).collect();
            let m = confusion(&labels, &preds).unwrap();
            let fp: Vec<Class> = preds.iter().map(|c| c.flipped()).collect();
            let mf = confusion(&flipped, &fp).unwrap();
            prop_assert_eq!(mf, m.flipped());
            prop_assert_eq!(m.sensitivity().ok(), mf.specificity().ok());
            prop_assert_eq!(m.tp + m.fn_, counts.positive as u64);
            prop_assert_eq!(m.tn + m.fp, counts.negative as u64);
        }

        #[test]
        fn f1_is_harmonic_mean(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50) {
            let m = ConfusionMatrix { tp, fp, tn, fn_ };
            if let (Ok(p), Ok(r), Ok(f)) = (m.precision(), m.sensitivity(), m.f1()) {
                if p + r > 0.0 {
                    prop_assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-12);
                }
            }
        }
    }
}
