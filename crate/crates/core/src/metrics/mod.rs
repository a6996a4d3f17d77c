//! Confusion metrics, ROC AUC and mean ± standard-error aggregation.

mod auc;
mod report;

pub use auc::{roc_auc, roc_auc_exact, roc_csv, roc_curve, RocPoint};
pub use report::{aggregate, format_table, AggregateReport, Summary};

use serde::{Deserialize, Serialize};

use crate::error::{MilError, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub(crate) fn check_lengths(probs: &[f64], labels: &[u8]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(MilError::Dimension(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(MilError::Precondition("no predictions to score".into()));
    }
    if let Some(bad) = labels.iter().position(|&l| l > 1) {
        return Err(MilError::config(
            "labels",
            format!("label {} at {bad} not in {{0,1}}", labels[bad]),
        ));
    }
    Ok(())
}

/// Counts quadrants, predicting positive iff p ≥ threshold.
pub fn confusion(probs: &[f64], labels: &[u8], threshold: f64) -> Result<Confusion> {
    check_lengths(probs, labels)?;
    let mut c = Confusion::default();
    for (&p, &l) in probs.iter().zip(labels) {
        match (p >= threshold, l == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Per-run metrics; `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_score: Option<f64>,
    pub auc: Option<f64>,
    pub fpr: Option<f64>,
}

impl RunMetrics {
    pub const NAMES: [&'static str; 6] =
        ["accuracy", "precision", "recall", "f_score", "auc", "fpr"];

    pub fn values(&self) -> [Option<f64>; 6] {
        [
            self.accuracy,
            self.precision,
            self.recall,
            self.f_score,
            self.auc,
            self.fpr,
        ]
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn run_metrics(conf: &Confusion, probs: &[f64], labels: &[u8]) -> Result<RunMetrics> {
    check_lengths(probs, labels)?;
    if conf.total() != probs.len() as u64 {
        return Err(MilError::Precondition(format!(
            "confusion covers {} bags but {} predictions were given",
            conf.total(),
            probs.len()
        )));
    }
    let precision = ratio(conf.tp, conf.tp + conf.fp);
    let recall = ratio(conf.tp, conf.tp + conf.fn_);
    let f_score = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(RunMetrics {
        accuracy: ratio(conf.tp + conf.tn, conf.total()),
        precision,
        recall,
        f_score,
        auc: roc_auc(probs, labels)?,
        fpr: ratio(conf.fp, conf.fp + conf.tn),
    })
}

/// Confusion at 0.5 followed by `run_metrics`.
pub fn evaluate(probs: &[f64], labels: &[u8]) -> Result<RunMetrics> {
    let conf = confusion(probs, labels, DEFAULT_THRESHOLD)?;
    run_metrics(&conf, probs, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        assert_eq!(
            confusion(&[0.9, 0.1], &[1, 0], 0.5).unwrap(),
            Confusion {
                tp: 1,
                fp: 0,
                tn: 1,
                fn_: 0
            }
        );
        assert_eq!(confusion(&[0.5], &[0], 0.5).unwrap().fp, 1);
        assert_eq!(
            confusion(&[0.6, 0.6, 0.4], &[1, 0, 1], 0.5).unwrap(),
            Confusion {
                tp: 1,
                fp: 1,
                tn: 0,
                fn_: 1
            }
        );
        assert!(confusion(&[0.5, 0.2], &[1], 0.5).is_err());
        assert!(confusion(&[], &[], 0.5).is_err());
    }

    #[test]
    fn formula_example() {
        let conf = Confusion {
            tp: 3,
            fp: 1,
            fn_: 2,
            tn: 4,
        };
        let probs = [0.9, 0.9, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
        let labels = [1, 1, 1, 0, 1, 1, 0, 0, 0, 0];
        let m = run_metrics(&conf, &probs, &labels).unwrap();
        assert_eq!(m.precision, Some(0.75));
        assert_eq!(m.recall, Some(0.6));
        assert!((m.f_score.unwrap() - 0.666667).abs() < 1e-6);
        assert_eq!(m.fpr, Some(0.2));
        assert_eq!(m.accuracy, Some(0.7));
    }

    #[test]
    fn perfect_and_all_positive() {
        let m = evaluate(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(
            m.values(),
            [
                Some(1.0),
                Some(1.0),
                Some(1.0),
                Some(1.0),
                Some(1.0),
                Some(0.0)
            ]
        );
        let m = evaluate(&[0.9, 0.8, 0.7, 0.6], &[1, 1, 0, 0]).unwrap();
        assert_eq!(
            (m.recall, m.fpr, m.accuracy),
            (Some(1.0), Some(1.0), Some(0.5))
        );
    }

    #[test]
    fn zero_denominators_are_undefined() {
        let m = evaluate(&[0.1, 0.2], &[0, 0]).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, None);
        assert_eq!(m.f_score, None);
        assert_eq!(m.auc, None);
        assert_eq!(m.fpr, Some(0.0));
        let json = serde_json::to_string(&m).unwrap();
        assert!(!json.contains("NaN"));
        assert!(json.contains(r#""precision":null"#));
    }
}
