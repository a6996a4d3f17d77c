use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamHyper, AdamState};
use crate::bagdata::{Bag, Dataset, Instance};
use crate::error::{MilError, Result};
use crate::milnet::{backward, bce_loss, forward, MilModel};
use crate::preprocess::Dihedral;
use crate::scalar::Scalar;

/// Square-patch layout of flattened, channel-planar instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchLayout {
    pub side: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    /// When set, each training instance gets a random dihedral transform every epoch.
    pub augment: Option<PatchLayout>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport<T> {
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    pub best_epoch: usize,
    /// Parameters at the end of `best_epoch`.
    pub best_model: MilModel<T>,
}

pub fn train<T: Scalar>(
    model_init: &MilModel<T>,
    trainset: &Dataset<T>,
    hyper: &AdamHyper,
    lambda: f64,
    seed: u64,
) -> Result<TrainReport<T>> {
    train_with(
        model_init,
        trainset,
        hyper,
        lambda,
        seed,
        &TrainOptions::default(),
    )
}

/// Bag-at-a-time Adam over `hyper.epochs` epochs, shuffling bag order each
/// epoch; returns the checkpoint of the lowest mean-loss epoch.
pub fn train_with<T: Scalar>(
    model_init: &MilModel<T>,
    trainset: &Dataset<T>,
    hyper: &AdamHyper,
    lambda: f64,
    seed: u64,
    options: &TrainOptions,
) -> Result<TrainReport<T>> {
    hyper.validate()?;
    if let Some(layout) = options.augment {
        if layout.side * layout.side * layout.channels != trainset.feature_dim {
            return Err(MilError::Dimension(format!(
                "augmentation layout {}x{}x{} does not match feature dim {}",
                layout.side, layout.side, layout.channels, trainset.feature_dim
            )));
        }
    }
    let mut model = model_init.clone().with_lambda(T::of(lambda));
    model.validate()?;
    if model.dims.feature_dim != trainset.feature_dim {
        return Err(MilError::Dimension(format!(
            "model expects dim {} but dataset has {}",
            model.dims.feature_dim, trainset.feature_dim
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = AdamState::new(&model.params);
    let mut order: Vec<usize> = (0..trainset.len()).collect();
    let mut losses = Vec::with_capacity(hyper.epochs);
    let mut best: Option<(usize, f64, MilModel<T>)> = None;

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let original = &trainset.bags()[i];
            let augmented;
            let bag = match options.augment {
                Some(layout) => {
                    augmented = augment_bag(original, layout, &mut rng);
                    &augmented
                }
                None => original,
            };
            let trace = forward(&model, bag)?;
            let loss = bce_loss(trace.probability, bag.label).as_f64();
            if !loss.is_finite() || !trace.probability.is_finite() {
                return Err(MilError::NonFiniteLoss {
                    epoch,
                    bag_id: bag.bag_id.clone(),
                    loss,
                });
            }
            total += loss;
            let grads = backward(&model, &trace, bag.label)?;
            adam_step(&mut model.params, &grads, &mut state, hyper)?;
        }
        let mean = total / trainset.len() as f64;
        debug!("epoch {epoch}: mean loss {mean:.6}");
        losses.push(mean);
        if best.as_ref().is_none_or(|(_, l, _)| mean < *l) {
            let mut snapshot = model.clone();
            snapshot.epoch = Some(epoch);
            best = Some((epoch, mean, snapshot));
        }
    }
    let (best_epoch, _, best_model) = best.expect("at least one epoch");
    Ok(TrainReport {
        losses,
        best_epoch,
        best_model,
    })
}

fn augment_bag<T: Scalar>(bag: &Bag<T>, layout: PatchLayout, rng: &mut ChaCha8Rng) -> Bag<T> {
    let instances = bag
        .instances
        .iter()
        .map(|inst| {
            let t = Dihedral::sample(rng);
            Instance::new(t.apply_planar(&inst.features, layout.side, layout.channels))
        })
        .collect();
    Bag {
        instances,
        ..bag.clone()
    }
}

/// Fraction of bags whose thresholded prediction matches the label.
pub fn accuracy<T: Scalar>(model: &MilModel<T>, dataset: &Dataset<T>) -> Result<f64> {
    let mut correct = 0usize;
    for bag in dataset.bags() {
        let p = forward(model, bag)?.probability;
        correct += usize::from((p >= T::of(0.5)) == bag.is_positive());
    }
    Ok(correct as f64 / dataset.len() as f64)
}
