use num_rational::Ratio;

use super::check_lengths;
use crate::error::Result;

/// Mann-Whitney AUC as an exact fraction; `None` when only one class is present.
pub fn roc_auc_exact(probs: &[f64], labels: &[u8]) -> Result<Option<Ratio<u64>>> {
    check_lengths(probs, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    // Twice the pair score: 2 per win, 1 per tie.
    let mut twice = 0u64;
    let mut negatives_below = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && probs[order[j]] == probs[order[i]] {
            j += 1;
        }
        let group = &order[i..j];
        let p = group.iter().filter(|&&k| labels[k] == 1).count() as u64;
        let n = group.len() as u64 - p;
        twice += p * (2 * negatives_below + n);
        negatives_below += n;
        i = j;
    }
    Ok(Some(Ratio::new(twice, 2 * pos * neg)))
}

pub fn roc_auc(probs: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    Ok(roc_auc_exact(probs, labels)?.map(|r| *r.numer() as f64 / *r.denom() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// One point per distinct score, descending, starting at (0, 0).
pub fn roc_curve(probs: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    check_lengths(probs, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let rate = |k: f64, total: f64| if total > 0.0 { k / total } else { 0.0 };
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let t = probs[order[i]];
        while i < order.len() && probs[order[i]] == t {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: rate(fp, neg),
            tpr: rate(tp, pos),
        });
    }
    Ok(points)
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
    out
}
