use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bagdata::{Dataset, Instance};
use crate::error::{MilError, Result};
use crate::milnet::{embed_one, forward, MilModel};
use crate::scalar::{mean_pstd, Scalar};

/// Probability at or above which a bag is predicted positive.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// A negative training bag the model calls positive, with its attention weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FalsePositiveBag<T> {
    /// Index into the dataset the bag was found in.
    pub bag_index: usize,
    pub bag_id: String,
    pub probability: T,
    pub weights: Vec<T>,
    pub mean: T,
    /// Population standard deviation of `weights`.
    pub std: T,
}

/// Negative bags with probability ≥ 0.5.
pub fn find_false_positives<T: Scalar>(
    model: &MilModel<T>,
    trainset: &Dataset<T>,
) -> Result<Vec<FalsePositiveBag<T>>> {
    let mut out = Vec::new();
    for (i, bag) in trainset.bags().iter().enumerate() {
        if bag.is_positive() {
            continue;
        }
        let trace = forward(model, bag)?;
        if trace.probability >= T::of(DECISION_THRESHOLD) {
            let (mean, std) = mean_pstd(&trace.weights);
            out.push(FalsePositiveBag {
                bag_index: i,
                bag_id: bag.bag_id.clone(),
                probability: trace.probability,
                weights: trace.weights,
                mean,
                std,
            });
        }
    }
    Ok(out)
}

/// Indices i with w_i ≥ σ + w̄ (population σ), ascending.
pub fn select_hard_instances<T: Scalar>(weights: &[T]) -> Vec<usize> {
    if weights.is_empty() {
        return Vec::new();
    }
    let (mean, std) = mean_pstd(weights);
    let threshold = std + mean;
    (0..weights.len())
        .filter(|&i| weights[i] >= threshold)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardEntry<T> {
    pub instance: Instance<T>,
    pub source_bag_id: String,
    pub weight: T,
}

/// Hard negative instances pooled across all false-positive bags.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HardPool<T> {
    pub entries: Vec<HardEntry<T>>,
}

impl<T: Scalar> HardPool<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_false_positives(fps: &[FalsePositiveBag<T>], trainset: &Dataset<T>) -> Self {
        let mut entries = Vec::new();
        for fp in fps {
            let bag = &trainset.bags()[fp.bag_index];
            for i in select_hard_instances(&fp.weights) {
                entries.push(HardEntry {
                    instance: bag.instances[i].clone(),
                    source_bag_id: fp.bag_id.clone(),
                    weight: fp.weights[i],
                });
            }
        }
        HardPool { entries }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let io_err = |e| MilError::io("<writer>", e);
        for e in &self.entries {
            writeln!(w, "{}", serde_json::to_string(e)?).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line.map_err(|e| MilError::io("<reader>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(|e| MilError::Parse {
                line: idx + 1,
                reason: e.to_string(),
            })?);
        }
        Ok(HardPool { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| MilError::io(path, e))?;
        self.write_jsonl(BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| MilError::io(path, e))?;
        Self::read_jsonl(BufReader::new(f))
    }
}

pub fn build_hard_pool<T: Scalar>(
    model: &MilModel<T>,
    trainset: &Dataset<T>,
) -> Result<HardPool<T>> {
    let fps = find_false_positives(model, trainset)?;
    Ok(HardPool::from_false_positives(&fps, trainset))
}

/// Embedder outputs for every pooled instance, in pool order.
pub fn extract_features<T: Scalar>(model: &MilModel<T>, pool: &HardPool<T>) -> Result<Vec<Vec<T>>> {
    pool.entries
        .iter()
        .map(|e| {
            if e.instance.dim() != model.dims.feature_dim {
                return Err(MilError::Dimension(format!(
                    "pool instance from {} has dim {} but model expects {}",
                    e.source_bag_id,
                    e.instance.dim(),
                    model.dims.feature_dim
                )));
            }
            Ok(embed_one(
                &model.params.embedder,
                &e.instance.features,
                None,
            ))
        })
        .collect()
}
