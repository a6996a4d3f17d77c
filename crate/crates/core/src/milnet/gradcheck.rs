use serde::Serialize;

use super::backward::backward;
use super::forward::{bce_loss, forward, forward_with_mask, ForwardTrace};
use super::model::MilModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::model::Dims;
use crate::bagdata::{Bag, Instance, Origin};
use crate::error::{MilError, Result};
use crate::optim::init_model;
use crate::scalar::Scalar;

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub parameters: usize,
    /// Parameters left unchecked because every step crossed a rectifier kink.
    pub skipped: usize,
}

/// |a − n| / max(|a|, |n|, 1e-8)
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Smallest step tried when a perturbation flips a rectifier.
const MIN_STEP: f64 = 1e-7;

/// Which hidden rectifier outputs are active, per instance.
fn relu_pattern<T: Scalar>(trace: &ForwardTrace<T>) -> Vec<bool> {
    trace
        .layer_inputs
        .iter()
        .flat_map(|layers| layers.iter().skip(1).flatten().map(|&x| x > T::zero()))
        .collect()
}

/// Central-difference check of every parameter. The mask from the
/// unperturbed pass is held fixed for the perturbed evaluations. When a
/// step flips a hidden rectifier the step is shrunk tenfold down to 1e-7;
/// parameters still straddling a kink there are counted in `skipped`.
pub fn grad_check<T: Scalar>(
    model: &MilModel<T>,
    bag: &Bag<T>,
    label: u8,
    eps: f64,
) -> Result<GradCheck> {
    if !(MIN_STEP..=1e-3).contains(&eps) {
        return Err(MilError::Precondition(format!(
            "eps {eps} outside [1e-7, 1e-3]"
        )));
    }
    let trace = forward(model, bag)?;
    let analytic = backward(model, &trace, label)?;
    let pattern = relu_pattern(&trace);
    let mask = trace.mask;

    let mut probe = model.clone();
    let mut worst = GradCheck {
        max_relative_error: 0.0,
        tensor: String::new(),
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        parameters: model.params.len(),
        skipped: 0,
    };
    let loss_at = |m: &MilModel<T>| -> Result<(f64, bool)> {
        let t = forward_with_mask(m, bag, &mask)?;
        Ok((
            bce_loss(t.probability, label).as_f64(),
            relu_pattern(&t) == pattern,
        ))
    };
    for (t, grad) in analytic.tensors().into_iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let original = probe.params.tensors()[t][i];
            let mut step = eps;
            let numeric = loop {
                let (hi, lo) = (original + T::of(step), original - T::of(step));
                probe.params.tensors_mut()[t][i] = hi;
                let (up, same_up) = loss_at(&probe)?;
                probe.params.tensors_mut()[t][i] = lo;
                let (down, same_down) = loss_at(&probe)?;
                probe.params.tensors_mut()[t][i] = original;
                if same_up && same_down {
                    break Some((up - down) / (hi - lo).as_f64());
                }
                if step / 10.0 < MIN_STEP * (1.0 - 1e-9) {
                    break None;
                }
                step /= 10.0;
            };
            let Some(numeric) = numeric else {
                worst.skipped += 1;
                continue;
            };
            let err = relative_error(a.as_f64(), numeric);
            if err > worst.max_relative_error || worst.tensor.is_empty() {
                worst = GradCheck {
                    max_relative_error: err,
                    tensor: model.params.tensor_name(t),
                    index: i,
                    analytic: a.as_f64(),
                    numeric,
                    ..worst
                };
            }
        }
    }
    Ok(worst)
}

/// Outcome of [`grad_check_trials`].
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckTrials {
    pub trials: usize,
    pub eps: f64,
    pub max_relative_error: f64,
    pub worst: GradCheck,
}

/// Grad-checks `trials` random small (model, bag) pairs: D ≤ 5, one optional
/// hidden layer of width ≤ 6, M ≤ 6, L ≤ 4, N ≤ 8, λ = 2.
pub fn grad_check_trials(trials: usize, seed: u64, eps: f64) -> Result<GradCheckTrials> {
    if trials == 0 {
        return Err(MilError::config("trials", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<GradCheck> = None;
    for _ in 0..trials {
        let dims = Dims {
            feature_dim: rng.random_range(1..=5),
            hidden: if rng.random_bool(0.5) {
                vec![]
            } else {
                vec![rng.random_range(1..=6)]
            },
            embed_dim: rng.random_range(1..=6),
            attention_dim: rng.random_range(1..=4),
        };
        let mut model = init_model::<f64>(&dims, 2.0, rng.random())?;
        for layer in &mut model.params.embedder.layers {
            for b in &mut layer.bias {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        model.params.classifier.b = rng.random_range(-0.5..0.5);
        let n = rng.random_range(1..=8);
        let label = rng.random_range(0..2u8);
        let instances = (0..n)
            .map(|_| {
                Instance::new(
                    (0..dims.feature_dim)
                        .map(|_| StandardNormal.sample(&mut rng))
                        .collect(),
                )
            })
            .collect();
        let bag = Bag::new("trial", label, instances, Origin::Natural)?;
        let r = grad_check(&model, &bag, label, eps)?;
        if worst
            .as_ref()
            .is_none_or(|w| r.max_relative_error > w.max_relative_error)
        {
            worst = Some(r);
        }
    }
    let worst = worst.expect("at least one trial");
    Ok(GradCheckTrials {
        trials,
        eps,
        max_relative_error: worst.max_relative_error,
        worst,
    })
}
