use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MilError, Result};
use crate::scalar::Scalar;

pub const DEFAULT_MAX_ITER: usize = 100;

/// Result of k-means over the pooled features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet<T> {
    pub c: usize,
    pub centroids: Vec<Vec<T>>,
    pub assignments: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Inertia after each Lloyd update, in iteration order.
    pub inertia_history: Vec<T>,
    pub iterations: usize,
}

impl<T: Scalar> ClusterSet<T> {
    pub fn inertia(&self) -> T {
        self.inertia_history.last().copied().unwrap_or_else(T::zero)
    }

    /// P_j = N_j / ΣN_j.
    pub fn selection_probabilities(&self) -> Vec<f64> {
        selection_probabilities(&self.sizes)
    }

    pub fn members(&self, j: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == j)
            .collect()
    }
}

pub fn selection_probabilities(sizes: &[usize]) -> Vec<f64> {
    let total: usize = sizes.iter().sum();
    sizes.iter().map(|&n| n as f64 / total as f64).collect()
}

pub(crate) fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        acc += d * d;
    }
    acc
}

/// Nearest centroid by squared distance; lowest index wins ties.
fn nearest<T: Scalar>(x: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, sq_dist(x, &centroids[0]));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_plus_plus<T: Scalar>(features: &[Vec<T>], c: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let n = features.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![features[first].clone()];
    let mut d2: Vec<f64> = features
        .iter()
        .map(|x| sq_dist(x, &centroids[0]).as_f64())
        .collect();
    while centroids.len() < c {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && r < acc {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| (0..n).rev().find(|&i| d2[i] > 0.0).expect("positive mass"))
        } else {
            // Every remaining point coincides with a centroid.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.push(features[pick].clone());
        let last = centroids.last().expect("just pushed");
        for (i, x) in features.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, last).as_f64());
        }
    }
    centroids
}

fn recompute<T: Scalar>(
    features: &[Vec<T>],
    assignments: &[usize],
    centroids: &mut [Vec<T>],
) -> Vec<usize> {
    let dim = features[0].len();
    let mut sums = vec![vec![T::zero(); dim]; centroids.len()];
    let mut sizes = vec![0usize; centroids.len()];
    for (x, &a) in features.iter().zip(assignments) {
        sizes[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(x) {
            *s += *v;
        }
    }
    for (j, sum) in sums.into_iter().enumerate() {
        if sizes[j] > 0 {
            let n = T::of_usize(sizes[j]);
            centroids[j] = sum.into_iter().map(|s| s / n).collect();
        }
    }
    sizes
}

/// Moves, for each empty cluster, the point farthest from its own centroid
/// (taken from a cluster with more than one member) into it.
fn repair_empty<T: Scalar>(
    features: &[Vec<T>],
    assignments: &mut [usize],
    centroids: &mut [Vec<T>],
    sizes: &mut Vec<usize>,
) {
    while let Some(empty) = sizes.iter().position(|&n| n == 0) {
        let mut far: Option<(usize, T)> = None;
        for (i, x) in features.iter().enumerate() {
            let a = assignments[i];
            if sizes[a] < 2 {
                continue;
            }
            let d = sq_dist(x, &centroids[a]);
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let Some((i, _)) = far else { break };
        assignments[i] = empty;
        centroids[empty] = features[i].clone();
        *sizes = recompute(features, assignments, centroids);
    }
}

fn inertia<T: Scalar>(features: &[Vec<T>], assignments: &[usize], centroids: &[Vec<T>]) -> T {
    features
        .iter()
        .zip(assignments)
        .map(|(x, &a)| sq_dist(x, &centroids[a]))
        .sum()
}

/// k-means++ seeding followed by Lloyd iterations until the assignment is
/// stable or `max_iter` updates have run.
pub fn kmeans<T: Scalar>(
    features: &[Vec<T>],
    c: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterSet<T>> {
    if c == 0 {
        return Err(MilError::config("clusters", "must be at least 1"));
    }
    if c > features.len() {
        return Err(MilError::config(
            "clusters",
            format!("{c} clusters requested but only {} rows", features.len()),
        ));
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().position(|f| f.len() != dim) {
        return Err(MilError::Dimension(format!(
            "feature row {bad} has dim {} but row 0 has {dim}",
            features[bad].len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(features, c, &mut rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut sizes = vec![0; c];
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter.max(1) {
        let next: Vec<usize> = features.iter().map(|x| nearest(x, &centroids).0).collect();
        if next == assignments {
            break;
        }
        assignments = next;
        sizes = recompute(features, &assignments, &mut centroids);
        repair_empty(features, &mut assignments, &mut centroids, &mut sizes);
        history.push(inertia(features, &assignments, &centroids));
        iterations += 1;
    }
    Ok(ClusterSet {
        c,
        centroids,
        assignments,
        sizes,
        inertia_history: history,
        iterations,
    })
}
