use serde::{Deserialize, Serialize};

use super::model::{Attention, Embedder, MilModel};
use crate::bagdata::Bag;
use crate::error::{MilError, Result};
use crate::scalar::{dot, Scalar};

/// Everything the forward pass computed for one bag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace<T> {
    /// `layer_inputs[j][k]`: input to embedder layer `k` for instance `j`.
    pub layer_inputs: Vec<Vec<Vec<T>>>,
    /// Rows g_j, N × M.
    pub embeddings: Vec<Vec<T>>,
    /// U g_j before softsign, N × L.
    pub attention_hidden: Vec<Vec<T>>,
    pub scores: Vec<T>,
    /// Softmax of `scores`.
    pub weights: Vec<T>,
    /// Pseudo-negative flags.
    pub mask: Vec<bool>,
    pub pooled: Vec<T>,
    pub logit: T,
    pub probability: T,
}

impl<T: Scalar> ForwardTrace<T> {
    /// Number of pseudo-negative instances.
    pub fn n_pseudo_negative(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

pub fn softsign<T: Scalar>(x: T) -> T {
    x / (T::one() + x.abs())
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Max-subtracted softmax.
pub fn softmax<T: Scalar>(scores: &[T]) -> Vec<T> {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn check_bag<T: Scalar>(model: &MilModel<T>, bag: &Bag<T>) -> Result<()> {
    if bag.dim() != model.dims.feature_dim {
        return Err(MilError::Dimension(format!(
            "bag {} has dim {} but model expects {}",
            bag.bag_id,
            bag.dim(),
            model.dims.feature_dim
        )));
    }
    Ok(())
}

/// Runs the embedder on one feature vector, recording each layer's input.
pub(crate) fn embed_one<T: Scalar>(
    embedder: &Embedder<T>,
    x: &[T],
    inputs: Option<&mut Vec<Vec<T>>>,
) -> Vec<T> {
    let last = embedder.layers.len() - 1;
    let mut current = x.to_vec();
    let mut next = Vec::new();
    let mut record = inputs;
    for (k, layer) in embedder.layers.iter().enumerate() {
        layer.apply(&current, &mut next);
        if k < last {
            for v in next.iter_mut() {
                *v = v.max(T::zero());
            }
        }
        let input = std::mem::replace(&mut current, std::mem::take(&mut next));
        if let Some(rec) = record.as_deref_mut() {
            rec.push(input);
        }
    }
    current
}

/// g_j = f_φ(x_j) for every instance, N × M.
pub fn embed_instances<T: Scalar>(model: &MilModel<T>, bag: &Bag<T>) -> Result<Vec<Vec<T>>> {
    check_bag(model, bag)?;
    Ok(bag
        .instances
        .iter()
        .map(|inst| embed_one(&model.params.embedder, &inst.features, None))
        .collect())
}

fn attention_hidden<T: Scalar>(attn: &Attention<T>, g: &[T]) -> Vec<T> {
    (0..attn.attention_dim)
        .map(|l| dot(attn.u_row(l), g))
        .collect()
}

fn score_from_hidden<T: Scalar>(attn: &Attention<T>, hidden: &[T]) -> T {
    let mut acc = T::zero();
    for (v, &h) in attn.v.iter().zip(hidden) {
        acc += *v * softsign(h);
    }
    acc
}

/// Scores `vᵀ softsign(U g_j)` and their softmax weights.
pub fn attention_weights<T: Scalar>(
    attn: &Attention<T>,
    embeddings: &[Vec<T>],
) -> Result<(Vec<T>, Vec<T>)> {
    if let Some(bad) = embeddings.iter().find(|g| g.len() != attn.embed_dim) {
        return Err(MilError::Dimension(format!(
            "embedding of length {} but attention expects {}",
            bad.len(),
            attn.embed_dim
        )));
    }
    let scores: Vec<T> = embeddings
        .iter()
        .map(|g| score_from_hidden(attn, &attention_hidden(attn, g)))
        .collect();
    let weights = softmax(&scores);
    Ok((scores, weights))
}

/// Flags instances whose weight is strictly below the bag mean.
pub fn pseudo_negative_mask<T: Scalar>(weights: &[T]) -> Vec<bool> {
    if weights.is_empty() {
        return Vec::new();
    }
    let mean = weights.iter().copied().sum::<T>() / T::of_usize(weights.len());
    weights.iter().map(|&w| w < mean).collect()
}

/// Σ a_j g_j with a_j = λ w_j on masked instances and w_j elsewhere,
/// accumulated in ascending instance order.
pub fn adaptive_pool<T: Scalar>(
    embeddings: &[Vec<T>],
    weights: &[T],
    mask: &[bool],
    lambda: T,
) -> Vec<T> {
    debug_assert_eq!(embeddings.len(), weights.len());
    debug_assert_eq!(embeddings.len(), mask.len());
    let m = embeddings.first().map_or(0, Vec::len);
    let mut z = vec![T::zero(); m];
    for ((g, &w), &masked) in embeddings.iter().zip(weights).zip(mask) {
        let a = if masked { lambda * w } else { w };
        for (zk, &gk) in z.iter_mut().zip(g) {
            *zk += a * gk;
        }
    }
    z
}

/// Plain attention pooling Σ w_j g_j, ascending instance order.
pub fn attention_pool<T: Scalar>(embeddings: &[Vec<T>], weights: &[T]) -> Vec<T> {
    let m = embeddings.first().map_or(0, Vec::len);
    let mut z = vec![T::zero(); m];
    for (g, &w) in embeddings.iter().zip(weights) {
        for (zk, &gk) in z.iter_mut().zip(g) {
            *zk += w * gk;
        }
    }
    z
}

pub fn forward<T: Scalar>(model: &MilModel<T>, bag: &Bag<T>) -> Result<ForwardTrace<T>> {
    forward_impl(model, bag, None)
}

/// Forward pass with the pseudo-negative mask supplied instead of recomputed.
pub fn forward_with_mask<T: Scalar>(
    model: &MilModel<T>,
    bag: &Bag<T>,
    mask: &[bool],
) -> Result<ForwardTrace<T>> {
    if mask.len() != bag.len() {
        return Err(MilError::Dimension(format!(
            "mask of length {} for bag of {} instances",
            mask.len(),
            bag.len()
        )));
    }
    forward_impl(model, bag, Some(mask))
}

fn forward_impl<T: Scalar>(
    model: &MilModel<T>,
    bag: &Bag<T>,
    frozen: Option<&[bool]>,
) -> Result<ForwardTrace<T>> {
    check_bag(model, bag)?;
    let params = &model.params;
    let attn = &params.attention;
    let n = bag.len();
    let mut layer_inputs = Vec::with_capacity(n);
    let mut embeddings = Vec::with_capacity(n);
    let mut hidden = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for inst in &bag.instances {
        let mut inputs = Vec::with_capacity(params.embedder.layers.len());
        let g = embed_one(&params.embedder, &inst.features, Some(&mut inputs));
        let h = attention_hidden(attn, &g);
        scores.push(score_from_hidden(attn, &h));
        layer_inputs.push(inputs);
        embeddings.push(g);
        hidden.push(h);
    }
    let weights = softmax(&scores);
    let mask = match frozen {
        Some(m) => m.to_vec(),
        None => pseudo_negative_mask(&weights),
    };
    let pooled = adaptive_pool(&embeddings, &weights, &mask, model.lambda);
    let logit = dot(&params.classifier.w, &pooled) + params.classifier.b;
    Ok(ForwardTrace {
        layer_inputs,
        embeddings,
        attention_hidden: hidden,
        scores,
        weights,
        mask,
        pooled,
        logit,
        probability: sigmoid(logit),
    })
}

pub const PROB_CLAMP: f64 = 1e-12;

/// Binary cross-entropy with the probability clamped to [1e-12, 1 − 1e-12].
pub fn bce_loss<T: Scalar>(probability: T, label: u8) -> T {
    let eps = T::of(PROB_CLAMP);
    let p = probability.max(eps).min(T::one() - eps);
    if label == 1 {
        -p.ln()
    } else {
        -(T::one() - p).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bagdata::{Instance, Origin};
    use crate::milnet::{Dims, Layer};

    fn bag(rows: Vec<Vec<f64>>) -> Bag<f64> {
        Bag::new(
            "t",
            1,
            rows.into_iter().map(Instance::new).collect(),
            Origin::Natural,
        )
        .unwrap()
    }

    fn identity_model(d: usize) -> MilModel<f64> {
        let dims = Dims {
            feature_dim: d,
            hidden: vec![],
            embed_dim: d,
            attention_dim: 2,
        };
        let mut m = MilModel::zeros(dims, 2.0).unwrap();
        let layer: &mut Layer<f64> = &mut m.params.embedder.layers[0];
        for i in 0..d {
            layer.weight[i * d + i] = 1.0;
        }
        m
    }

    #[test]
    fn zero_params_embed_to_zero() {
        let m = MilModel::<f64>::zeros(Dims::standard(3), 2.0).unwrap();
        let g = embed_instances(&m, &bag(vec![vec![1.0, -2.0, 3.0], vec![4.0, 5.0, 6.0]])).unwrap();
        assert!(g.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(g[0].len(), 32);
    }

    #[test]
    fn identity_embedder() {
        let m = identity_model(3);
        let rows = vec![vec![1.0, -2.0, 3.0], vec![0.5, 0.0, -7.0]];
        assert_eq!(embed_instances(&m, &bag(rows.clone())).unwrap(), rows);
    }

    #[test]
    fn two_layer_matches_hand_evaluation() {
        let dims = Dims {
            feature_dim: 2,
            hidden: vec![2],
            embed_dim: 1,
            attention_dim: 1,
        };
        let mut m = MilModel::<f64>::zeros(dims, 1.0).unwrap();
        m.params.embedder.layers[0].weight = vec![1.0, -1.0, 0.5, 2.0];
        m.params.embedder.layers[0].bias = vec![0.0, -1.0];
        m.params.embedder.layers[1].weight = vec![3.0, -0.5];
        m.params.embedder.layers[1].bias = vec![0.25];
        // x = (1, 2): hidden = relu(1-2, 0.5+4-1) = (0, 3.5); out = 0*3 - 0.5*3.5 + 0.25
        let g = embed_instances(&m, &bag(vec![vec![1.0, 2.0]])).unwrap();
        assert_eq!(g, vec![vec![-1.5]]);
    }

    #[test]
    fn dimension_mismatch() {
        let m = identity_model(3);
        assert!(matches!(
            embed_instances(&m, &bag(vec![vec![1.0, 2.0]])),
            Err(MilError::Dimension(_))
        ));
    }

    #[test]
    fn attention_edge_cases() {
        let m = identity_model(2);
        let (_, w) = attention_weights(&m.params.attention, &[vec![3.0, 4.0]]).unwrap();
        assert_eq!(w, vec![1.0]);
        let mut att = m.params.attention.clone();
        att.u = vec![1.0, 2.0, -1.0, 0.5];
        att.v = vec![0.7, -0.2];
        let (_, w) = attention_weights(&att, &[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        let w = softmax(&[2f64.ln(), 0.0]);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softsign_scores() {
        let mut att = identity_model(2).params.attention;
        att.u = vec![1.0, 0.0, 0.0, 1.0];
        att.v = vec![1.0, 1.0];
        let (s, _) = attention_weights(&att, &[vec![1.0, -3.0]]).unwrap();
        assert!((s[0] - (0.5 - 0.75)).abs() < 1e-15);
    }

    #[test]
    fn masks() {
        assert_eq!(pseudo_negative_mask(&[0.25; 4]), vec![false; 4]);
        assert_eq!(pseudo_negative_mask(&[0.6, 0.4]), vec![false, true]);
        assert_eq!(
            pseudo_negative_mask(&[0.5, 0.3, 0.2]),
            vec![false, true, true]
        );
        assert_eq!(pseudo_negative_mask(&[1.0]), vec![false]);
    }

    #[test]
    fn pooling() {
        let g = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let w = [0.6, 0.4];
        assert_eq!(adaptive_pool(&g, &w, &[false, true], 2.0), vec![0.6, 0.8]);
        assert_eq!(
            adaptive_pool(&g, &w, &[true, true], 1.0),
            attention_pool(&g, &w)
        );
        let plain = attention_pool(&g, &w);
        let all = adaptive_pool(&g, &w, &[true, true], 2.0);
        assert_eq!(all, plain.iter().map(|x| 2.0 * x).collect::<Vec<_>>());
    }

    #[test]
    fn forward_basics() {
        let mut m = identity_model(2);
        let b = bag(vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, 3.0]]);
        let t = forward(&m, &b).unwrap();
        assert_eq!(t.probability, 0.5);
        let single = bag(vec![vec![1.5, -2.5]]);
        m.params.classifier.w = vec![0.3, 0.1];
        let t = forward(&m, &single).unwrap();
        assert_eq!(t.pooled, vec![1.5, -2.5]);
        assert_eq!(t.mask, vec![false]);
        assert!((t.logit - (0.45 - 0.25)).abs() < 1e-15);
        assert!((t.probability - 1.0 / (1.0 + (-0.2f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn losses() {
        assert!((bce_loss(0.5, 1) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_loss(0.5, 0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_loss(1.0 - 1e-12, 1) < 1.1e-12);
        assert!((bce_loss(0.9f64, 0) - std::f64::consts::LN_10).abs() < 1e-12);
        assert!(bce_loss(0.0f64, 1).is_finite());
        assert!(bce_loss(1.0f64, 0).is_finite());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert_eq!(sigmoid(800.0f64), 1.0);
    }
}
