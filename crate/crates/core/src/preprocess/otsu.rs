use serde::{Deserialize, Serialize};

use crate::error::{MilError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtsuResult {
    pub threshold: u8,
    pub between_class_variance: f64,
}

pub fn histogram(values: impl IntoIterator<Item = u8>) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for v in values {
        hist[v as usize] += 1;
    }
    hist
}

/// ω₀ω₁(μ₀−μ₁)² for classes {≤t} and {>t}, from exact integer class totals.
pub(crate) fn between_class_variance(n0: u64, s0: u64, n1: u64, s1: u64) -> f64 {
    if n0 == 0 || n1 == 0 {
        return 0.0;
    }
    let total = (n0 + n1) as f64;
    let (w0, w1) = (n0 as f64 / total, n1 as f64 / total);
    let (m0, m1) = (s0 as f64 / n0 as f64, s1 as f64 / n1 as f64);
    w0 * w1 * (m0 - m1) * (m0 - m1)
}

/// Exhaustive Otsu scan; the smallest threshold wins ties.
///
/// A histogram with a single occupied bin returns that bin with variance 0.
pub fn otsu_threshold(hist: &[u64; 256]) -> Result<OtsuResult> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return Err(MilError::Precondition(
            "otsu_threshold on an empty histogram".into(),
        ));
    }
    let occupied: Vec<usize> = (0..256).filter(|&i| hist[i] > 0).collect();
    if occupied.len() == 1 {
        return Ok(OtsuResult {
            threshold: occupied[0] as u8,
            between_class_variance: 0.0,
        });
    }
    let total_sum: u64 = hist.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best = OtsuResult {
        threshold: 0,
        between_class_variance: f64::NEG_INFINITY,
    };
    for (t, &count) in hist.iter().enumerate() {
        n0 += count;
        s0 += t as u64 * count;
        let var = between_class_variance(n0, s0, total - n0, total_sum - s0);
        if var > best.between_class_variance {
            best = OtsuResult {
                threshold: t as u8,
                between_class_variance: var,
            };
        }
    }
    Ok(best)
}
