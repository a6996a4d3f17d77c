use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::milnet::{Dims, MilModel};
use crate::scalar::Scalar;

/// Glorot bound sqrt(6 / (fan_in + fan_out)).
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn fill_uniform<T: Scalar>(out: &mut [T], bound: f64, rng: &mut ChaCha8Rng) {
    for x in out {
        // open interval (-a, a)
        let mut s = rng.random_range(-bound..bound);
        while s == -bound {
            s = rng.random_range(-bound..bound);
        }
        *x = T::of(s);
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_model<T: Scalar>(dims: &Dims, lambda: f64, seed: u64) -> Result<MilModel<T>> {
    let mut model = MilModel::zeros(dims.clone(), T::of(lambda))?;
    model.seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = &mut model.params;
    for layer in &mut p.embedder.layers {
        fill_uniform(
            &mut layer.weight,
            glorot_bound(layer.in_dim, layer.out_dim),
            &mut rng,
        );
    }
    let (m, l) = (dims.embed_dim, dims.attention_dim);
    fill_uniform(&mut p.attention.u, glorot_bound(m, l), &mut rng);
    fill_uniform(&mut p.attention.v, glorot_bound(l, 1), &mut rng);
    fill_uniform(&mut p.classifier.w, glorot_bound(m, 1), &mut rng);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let d = Dims::standard(6);
        assert_eq!(
            init_model::<f64>(&d, 2.0, 1).unwrap(),
            init_model::<f64>(&d, 2.0, 1).unwrap()
        );
        assert_ne!(
            init_model::<f64>(&d, 2.0, 1).unwrap(),
            init_model::<f64>(&d, 2.0, 2).unwrap()
        );
    }

    #[test]
    fn minimal_dims() {
        let d = Dims {
            feature_dim: 1,
            hidden: vec![],
            embed_dim: 1,
            attention_dim: 1,
        };
        let m = init_model::<f32>(&d, 1.0, 0).unwrap();
        assert_eq!(m.params.embedder.layers[0].weight.len(), 1);
        assert_eq!(m.params.attention.u.len(), 1);
        m.validate().unwrap();
    }

    #[test]
    fn entries_within_bounds_and_biases_zero() {
        let d = Dims::standard(10);
        let m = init_model::<f64>(&d, 2.0, 3).unwrap();
        for layer in &m.params.embedder.layers {
            let a = glorot_bound(layer.in_dim, layer.out_dim);
            assert!(layer.weight.iter().all(|w| w.abs() < a));
            assert!(layer.weight.iter().any(|w| w.abs() > a / 2.0));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
        let a = glorot_bound(32, 16);
        assert!(m.params.attention.u.iter().all(|w| w.abs() < a));
        assert!(m
            .params
            .attention
            .v
            .iter()
            .all(|w| w.abs() < glorot_bound(16, 1)));
        assert!(m
            .params
            .classifier
            .w
            .iter()
            .all(|w| w.abs() < glorot_bound(32, 1)));
        assert_eq!(m.params.classifier.b, 0.0);
    }
}
