//! Bags, datasets, synthetic generation, persistence and fold splitting.

mod io;
mod split;
mod synth;

pub use io::{append_bag, load_bags, read_bags, save_bags, write_bags};
pub use split::{kfold_split, Fold};
pub(crate) use synth::round_sig9;
pub use synth::{generate_synthetic, generate_synthetic_with_components, Component, SynthConfig};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{MilError, Result};
use crate::scalar::Scalar;

/// How a bag came to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Natural,
    GeneratedSb,
    GeneratedMb,
    GeneratedFmb,
}

impl Origin {
    pub fn is_natural(self) -> bool {
        self == Origin::Natural
    }
}

/// One feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Instance<T> {
    pub features: Vec<T>,
}

impl<T: Scalar> Instance<T> {
    pub fn new(features: Vec<T>) -> Self {
        Instance { features }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// A labeled multiset of instances; the unit of prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag<T> {
    pub bag_id: String,
    /// 0 (negative) or 1 (positive).
    pub label: u8,
    pub instances: Vec<Instance<T>>,
    pub origin: Origin,
}

impl<T: Scalar> Bag<T> {
    pub fn new(
        bag_id: impl Into<String>,
        label: u8,
        instances: Vec<Instance<T>>,
        origin: Origin,
    ) -> Result<Self> {
        let bag_id = bag_id.into();
        if label > 1 {
            return Err(MilError::config(
                "label",
                format!("bag {bag_id}: {label} not in {{0,1}}"),
            ));
        }
        if instances.is_empty() {
            return Err(MilError::EmptyBag(bag_id));
        }
        let dim = instances[0].dim();
        if let Some(bad) = instances.iter().position(|i| i.dim() != dim) {
            return Err(MilError::Dimension(format!(
                "bag {bag_id}: instance {bad} has dim {} but instance 0 has {dim}",
                instances[bad].dim()
            )));
        }
        if instances
            .iter()
            .any(|i| i.features.iter().any(|x| !x.is_finite()))
        {
            return Err(MilError::config(
                "instances",
                format!("bag {bag_id}: non-finite feature"),
            ));
        }
        Ok(Bag {
            bag_id,
            label,
            instances,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.instances[0].dim()
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

/// A non-empty collection of bags sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub feature_dim: usize,
    pub provenance: String,
    bags: Vec<Bag<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        feature_dim: usize,
        provenance: impl Into<String>,
        bags: Vec<Bag<T>>,
    ) -> Result<Self> {
        if bags.is_empty() {
            return Err(MilError::EmptyDataset);
        }
        let mut seen = HashSet::with_capacity(bags.len());
        for bag in &bags {
            if bag.dim() != feature_dim {
                return Err(MilError::Dimension(format!(
                    "bag {}: dim {} but dataset declares {feature_dim}",
                    bag.bag_id,
                    bag.dim()
                )));
            }
            if !seen.insert(bag.bag_id.as_str()) {
                return Err(MilError::config(
                    "bag_id",
                    format!("duplicate id {}", bag.bag_id),
                ));
            }
        }
        Ok(Dataset {
            feature_dim,
            provenance: provenance.into(),
            bags,
        })
    }

    pub fn bags(&self) -> &[Bag<T>] {
        &self.bags
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn into_bags(self) -> Vec<Bag<T>> {
        self.bags
    }

    pub fn positives(&self) -> usize {
        self.bags.iter().filter(|b| b.is_positive()).count()
    }

    /// Bags at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize], provenance: impl Into<String>) -> Result<Self> {
        let bags = indices.iter().map(|&i| self.bags[i].clone()).collect();
        Dataset::new(self.feature_dim, provenance, bags)
    }

    /// Union with generated hard negative bags; the original bags are kept untouched and first.
    pub fn augmented(&self, hard_bags: &[Bag<T>]) -> Result<Self> {
        if hard_bags.is_empty() {
            return Ok(self.clone());
        }
        let mut bags = self.bags.clone();
        bags.extend(hard_bags.iter().cloned());
        Dataset::new(
            self.feature_dim,
            format!(
                "{} + {} hard negative bags",
                self.provenance,
                hard_bags.len()
            ),
            bags,
        )
    }
}

/// Returns `trainset` plus the generated bags.
pub fn augment_training_set<T: Scalar>(
    trainset: &Dataset<T>,
    hard_bags: &[Bag<T>],
) -> Result<Dataset<T>> {
    trainset.augmented(hard_bags)
}

/// Bag-size statistics used to size generated bags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BagSizeStats {
    pub mu: f64,
    /// Population standard deviation.
    pub sigma: f64,
    pub z_min: usize,
    pub z_max: usize,
}

impl BagSizeStats {
    pub fn new(mu: f64, sigma: f64, z_min: usize, z_max: usize) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite() && sigma >= 0.0) {
            return Err(MilError::config(
                "size_stats",
                "mu and sigma must be finite, sigma >= 0",
            ));
        }
        if z_min < 1 || z_max < z_min {
            return Err(MilError::config(
                "size_stats",
                format!("bad range [{z_min}, {z_max}]"),
            ));
        }
        Ok(BagSizeStats {
            mu,
            sigma,
            z_min,
            z_max,
        })
    }
}

pub fn bag_size_stats<T: Scalar>(dataset: &Dataset<T>) -> BagSizeStats {
    let sizes: Vec<f64> = dataset.bags().iter().map(|b| b.len() as f64).collect();
    let (mu, sigma) = crate::scalar::mean_pstd(&sizes);
    let z_min = dataset.bags().iter().map(Bag::len).min().unwrap_or(1);
    let z_max = dataset.bags().iter().map(Bag::len).max().unwrap_or(1);
    BagSizeStats {
        mu,
        sigma,
        z_min,
        z_max,
    }
}
