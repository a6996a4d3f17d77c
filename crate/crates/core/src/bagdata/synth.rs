use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Bag, Dataset, Instance, Origin};
use crate::error::{MilError, Result};
use crate::scalar::Scalar;

/// Which mixture component an instance was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Witness,
    Confuser,
    Background,
}

/// Surrogate for tiled patch data: isotropic Gaussian components in feature space.
///
/// Positive bags get one witness at a random slot (plus extra witnesses at
/// `witness_rate`); every other slot in any bag is a confuser with
/// probability `confuser_rate`, else background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_bags: usize,
    pub positive_fraction: f64,
    /// Inclusive range; sizes are uniform over it.
    pub bag_size_range: [usize; 2],
    pub feature_dim: usize,
    pub witness_mean: Vec<f64>,
    pub confuser_mean: Vec<f64>,
    pub background_mean: Vec<f64>,
    pub cluster_spread: f64,
    pub confuser_rate: f64,
    #[serde(default)]
    pub witness_rate: f64,
    /// Whether positive bags also receive confusers.
    #[serde(default = "yes")]
    pub confusers_in_positive: bool,
    pub seed: u64,
}

fn yes() -> bool {
    true
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig::with_dim(10)
    }
}

impl SynthConfig {
    /// Default layout for `dim` features: background at the origin, witness
    /// 10 spreads away along axis 0, confuser 1.5 spreads from the witness
    /// along axis 1.
    pub fn with_dim(dim: usize) -> Self {
        assert!(dim >= 2, "synthetic layout needs at least two feature dims");
        let spread = 1.0;
        let mut witness = vec![0.0; dim];
        witness[0] = 10.0 * spread;
        let mut confuser = witness.clone();
        confuser[1] = 1.5 * spread;
        SynthConfig {
            n_bags: 100,
            positive_fraction: 0.5,
            bag_size_range: [6, 14],
            feature_dim: dim,
            witness_mean: witness,
            confuser_mean: confuser,
            background_mean: vec![0.0; dim],
            cluster_spread: spread,
            confuser_rate: 0.5,
            witness_rate: 0.0,
            confusers_in_positive: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bags == 0 {
            return Err(MilError::config("n_bags", "must be >= 1"));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return Err(MilError::config("positive_fraction", "must lie in (0, 1)"));
        }
        let [lo, hi] = self.bag_size_range;
        if lo < 1 || hi < lo {
            return Err(MilError::config(
                "bag_size_range",
                format!("bad range [{lo}, {hi}]"),
            ));
        }
        if self.feature_dim == 0 {
            return Err(MilError::config("feature_dim", "must be >= 1"));
        }
        for (field, mean) in [
            ("witness_mean", &self.witness_mean),
            ("confuser_mean", &self.confuser_mean),
            ("background_mean", &self.background_mean),
        ] {
            if mean.len() != self.feature_dim {
                return Err(MilError::config(
                    field,
                    format!("length {} != {}", mean.len(), self.feature_dim),
                ));
            }
            if mean.iter().any(|x| !x.is_finite()) {
                return Err(MilError::config(field, "non-finite entry"));
            }
        }
        if self.witness_mean == self.confuser_mean
            || self.witness_mean == self.background_mean
            || self.confuser_mean == self.background_mean
        {
            return Err(MilError::config(
                "witness_mean",
                "component means must be pairwise distinct",
            ));
        }
        if !(self.cluster_spread > 0.0 && self.cluster_spread.is_finite()) {
            return Err(MilError::config("cluster_spread", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.confuser_rate) {
            return Err(MilError::config("confuser_rate", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.witness_rate) {
            return Err(MilError::config("witness_rate", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn mean_of(&self, component: Component) -> &[f64] {
        match component {
            Component::Witness => &self.witness_mean,
            Component::Confuser => &self.confuser_mean,
            Component::Background => &self.background_mean,
        }
    }

    /// Number of positive bags the generator will emit.
    pub fn positive_count(&self) -> usize {
        ((self.n_bags as f64 * self.positive_fraction).round() as usize).clamp(0, self.n_bags)
    }
}

/// Rounds to nine significant digits, the precision of the bag file format.
pub(crate) fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Draws a dataset; byte-identical output for a fixed config.
pub fn generate_synthetic<T: Scalar>(config: &SynthConfig) -> Result<Dataset<T>> {
    generate_synthetic_with_components(config).map(|(ds, _)| ds)
}

/// As [`generate_synthetic`], also returning the component behind every instance.
pub fn generate_synthetic_with_components<T: Scalar>(
    config: &SynthConfig,
) -> Result<(Dataset<T>, Vec<Vec<Component>>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let n_pos = config.positive_count();
    let mut labels: Vec<u8> = (0..config.n_bags).map(|i| u8::from(i < n_pos)).collect();
    labels.shuffle(&mut rng);

    let [lo, hi] = config.bag_size_range;
    let mut bags = Vec::with_capacity(config.n_bags);
    let mut components = Vec::with_capacity(config.n_bags);
    for (i, &label) in labels.iter().enumerate() {
        let size = rng.random_range(lo..=hi);
        let forced_witness = (label == 1).then(|| rng.random_range(0..size));
        let mut instances = Vec::with_capacity(size);
        let mut drawn = Vec::with_capacity(size);
        for slot in 0..size {
            let component = if Some(slot) == forced_witness
                || (label == 1 && config.witness_rate > 0.0 && rng.random_bool(config.witness_rate))
            {
                Component::Witness
            } else if (label == 0 || config.confusers_in_positive)
                && config.confuser_rate > 0.0
                && rng.random_bool(config.confuser_rate)
            {
                Component::Confuser
            } else {
                Component::Background
            };
            instances.push(draw_instance(config, component, &mut rng));
            drawn.push(component);
        }
        components.push(drawn);
        bags.push(Bag::new(
            format!("b{i:04}"),
            label,
            instances,
            Origin::Natural,
        )?);
    }

    let provenance = format!(
        "synthetic seed={} bags={} confuser_rate={} dim={}",
        config.seed, config.n_bags, config.confuser_rate, config.feature_dim
    );
    Ok((
        Dataset::new(config.feature_dim, provenance, bags)?,
        components,
    ))
}

fn draw_instance<T: Scalar>(
    config: &SynthConfig,
    component: Component,
    rng: &mut ChaCha8Rng,
) -> Instance<T> {
    let features = config
        .mean_of(component)
        .iter()
        .map(|&m| {
            let z: f64 = rng.sample(StandardNormal);
            T::of(round_sig9(m + config.cluster_spread * z))
        })
        .collect();
    Instance::new(features)
}
