use super::forward::ForwardTrace;
use super::model::{MilModel, Params};
use crate::error::{MilError, Result};
use crate::scalar::{dot, Scalar};

fn check_trace<T: Scalar>(model: &MilModel<T>, trace: &ForwardTrace<T>) -> Result<()> {
    let n = trace.weights.len();
    let (m, l) = (model.dims.embed_dim, model.dims.attention_dim);
    let shapes = model.dims.layer_shapes();
    let consistent = n > 0
        && trace.scores.len() == n
        && trace.mask.len() == n
        && trace.embeddings.len() == n
        && trace.attention_hidden.len() == n
        && trace.layer_inputs.len() == n
        && trace.pooled.len() == m
        && trace.embeddings.iter().all(|g| g.len() == m)
        && trace.attention_hidden.iter().all(|h| h.len() == l)
        && trace.layer_inputs.iter().all(|inputs| {
            inputs.len() == shapes.len()
                && inputs.iter().zip(&shapes).all(|(x, &(i, _))| x.len() == i)
        });
    if consistent {
        Ok(())
    } else {
        Err(MilError::StaleTrace(
            "trace shapes do not match the model".into(),
        ))
    }
}

/// Exact gradient of the bag's cross-entropy loss with respect to every parameter.
///
/// The pseudo-negative mask is treated as a constant.
pub fn backward<T: Scalar>(
    model: &MilModel<T>,
    trace: &ForwardTrace<T>,
    label: u8,
) -> Result<Params<T>> {
    check_trace(model, trace)?;
    let params = &model.params;
    let attn = &params.attention;
    let (m, l) = (model.dims.embed_dim, model.dims.attention_dim);
    let n = trace.weights.len();
    let mut grads = params.zeros_like();

    // d loss / d logit for sigmoid + cross-entropy
    let dlogit = trace.probability - T::of(f64::from(label));
    grads.classifier.b = dlogit;
    for (gw, &z) in grads.classifier.w.iter_mut().zip(&trace.pooled) {
        *gw = dlogit * z;
    }
    let dz: Vec<T> = params.classifier.w.iter().map(|&w| dlogit * w).collect();

    // z = Σ c_j w_j g_j with c_j ∈ {1, λ}
    let coef: Vec<T> = trace
        .mask
        .iter()
        .map(|&masked| if masked { model.lambda } else { T::one() })
        .collect();
    let mut dg: Vec<Vec<T>> = (0..n)
        .map(|j| dz.iter().map(|&d| coef[j] * trace.weights[j] * d).collect())
        .collect();
    let dw: Vec<T> = (0..n)
        .map(|j| coef[j] * dot(&dz, &trace.embeddings[j]))
        .collect();

    // softmax
    let mean_dw = dot(&trace.weights, &dw);
    let ds: Vec<T> = (0..n)
        .map(|j| trace.weights[j] * (dw[j] - mean_dw))
        .collect();

    // score_j = vᵀ softsign(U g_j)
    for j in 0..n {
        let hidden = &trace.attention_hidden[j];
        let g = &trace.embeddings[j];
        for k in 0..l {
            let u = hidden[k];
            let denom = T::one() + u.abs();
            grads.attention.v[k] += ds[j] * (u / denom);
            let du = ds[j] * attn.v[k] / (denom * denom);
            if du == T::zero() {
                continue;
            }
            let row = &mut grads.attention.u[k * m..(k + 1) * m];
            for (gu, &gi) in row.iter_mut().zip(g) {
                *gu += du * gi;
            }
            for (dgi, &ui) in dg[j].iter_mut().zip(attn.u_row(k)) {
                *dgi += du * ui;
            }
        }
    }

    // embedder, last layer first
    let layers = &params.embedder.layers;
    for (j, delta_out) in dg.iter_mut().enumerate() {
        let inputs = &trace.layer_inputs[j];
        let mut delta = std::mem::take(delta_out);
        for k in (0..layers.len()).rev() {
            let layer = &layers[k];
            let input = &inputs[k];
            let glayer = &mut grads.embedder.layers[k];
            for o in 0..layer.out_dim {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                glayer.bias[o] += d;
                let row = &mut glayer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, &x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if k == 0 {
                break;
            }
            // input to layer k is relu(pre_{k-1}); the rectifier passes gradient where it is positive
            let mut prev = vec![T::zero(); layer.in_dim];
            for o in 0..layer.out_dim {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                for (p, &w) in prev.iter_mut().zip(layer.row(o)) {
                    *p += d * w;
                }
            }
            for (p, &x) in prev.iter_mut().zip(input) {
                if x <= T::zero() {
                    *p = T::zero();
                }
            }
            delta = prev;
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bagdata::{Bag, Instance, Origin};
    use crate::milnet::{forward, Dims};
    use crate::optim::init_model;

    fn bag() -> Bag<f64> {
        let rows = vec![
            vec![0.3, -1.2, 0.7],
            vec![1.1, 0.4, -0.5],
            vec![-0.9, 0.2, 0.1],
        ];
        Bag::new(
            "b",
            1,
            rows.into_iter().map(Instance::new).collect(),
            Origin::Natural,
        )
        .unwrap()
    }

    fn dims() -> Dims {
        Dims {
            feature_dim: 3,
            hidden: vec![5],
            embed_dim: 4,
            attention_dim: 2,
        }
    }

    #[test]
    fn zero_classifier_cuts_the_chain() {
        let mut model = init_model::<f64>(&dims(), 2.0, 3).unwrap();
        model.params.classifier.w.fill(0.0);
        let trace = forward(&model, &bag()).unwrap();
        let g = backward(&model, &trace, 1).unwrap();
        for layer in &g.embedder.layers {
            assert!(layer.weight.iter().chain(&layer.bias).all(|&x| x == 0.0));
        }
        assert!(g
            .attention
            .u
            .iter()
            .chain(&g.attention.v)
            .all(|&x| x == 0.0));
        assert_eq!(g.classifier.b, trace.probability - 1.0);
    }

    #[test]
    fn bias_gradient_is_p_minus_label() {
        let model = init_model::<f64>(&dims(), 2.0, 9).unwrap();
        let trace = forward(&model, &bag()).unwrap();
        for label in [0u8, 1] {
            let g = backward(&model, &trace, label).unwrap();
            assert_eq!(g.classifier.b, trace.probability - f64::from(label));
        }
    }

    #[test]
    fn stale_trace_is_rejected() {
        let model = init_model::<f64>(&dims(), 2.0, 1).unwrap();
        let trace = forward(&model, &bag()).unwrap();
        let other = init_model::<f64>(
            &Dims {
                embed_dim: 6,
                ..dims()
            },
            2.0,
            1,
        )
        .unwrap();
        assert!(matches!(
            backward(&other, &trace, 1),
            Err(MilError::StaleTrace(_))
        ));
    }
}
