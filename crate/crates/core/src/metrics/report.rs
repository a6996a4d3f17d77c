use serde::{Deserialize, Serialize};

use super::RunMetrics;
use crate::error::{MilError, Result};

/// Mean and standard error over the runs where a metric was defined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Summary::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n == 1 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            var.sqrt() / (n as f64).sqrt()
        };
        Summary {
            mean: Some(mean),
            se: Some(se),
            n,
        }
    }

    /// "mean±se" with 3 decimals, or "NA".
    pub fn cell(&self) -> String {
        match (self.mean, self.se) {
            (Some(m), Some(s)) => format!("{m:.3}±{s:.3}"),
            _ => "NA".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub accuracy: Summary,
    pub precision: Summary,
    pub recall: Summary,
    pub f_score: Summary,
    pub auc: Summary,
    pub fpr: Summary,
}

impl AggregateReport {
    /// Summaries in table column order.
    pub fn summaries(&self) -> [Summary; 6] {
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

pub fn aggregate(runs: &[RunMetrics]) -> Result<AggregateReport> {
    if runs.is_empty() {
        return Err(MilError::Precondition(
            "aggregate needs at least one run".into(),
        ));
    }
    let column = |k: usize| -> Summary {
        let defined: Vec<f64> = runs.iter().filter_map(|r| r.values()[k]).collect();
        Summary::of(&defined)
    };
    Ok(AggregateReport {
        runs: runs.len(),
        accuracy: column(0),
        precision: column(1),
        recall: column(2),
        f_score: column(3),
        auc: column(4),
        fpr: column(5),
    })
}

pub const TABLE_HEADER: [&str; 7] = [
    "Method",
    "Accuracy",
    "Precision",
    "Recall",
    "F-score",
    "AUC",
    "FPR",
];

/// Aligned plain-text table, one row per method.
pub fn format_table(rows: &[(String, AggregateReport)]) -> String {
    let mut cells: Vec<Vec<String>> = vec![TABLE_HEADER.iter().map(|s| s.to_string()).collect()];
    for (name, report) in rows {
        let mut row = vec![name.clone()];
        row.extend(report.summaries().iter().map(Summary::cell));
        cells.push(row);
    }
    let widths: Vec<usize> = (0..TABLE_HEADER.len())
        .map(|c| {
            cells
                .iter()
                .map(|r| r[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
