use serde::{Deserialize, Serialize};

use crate::error::{MilError, Result};
use crate::scalar::Scalar;

/// Network shape: feature_dim D → hidden... → embed_dim M, attention width L.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub feature_dim: usize,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub attention_dim: usize,
}

impl Dims {
    /// D → 64 → 32 embedder with a 16-wide attention layer.
    pub fn standard(feature_dim: usize) -> Self {
        Dims {
            feature_dim,
            hidden: vec![64],
            embed_dim: 32,
            attention_dim: 16,
        }
    }

    /// (in, out) for each embedder layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.feature_dim];
        widths.extend(&self.hidden);
        widths.push(self.embed_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.embed_dim == 0 || self.attention_dim == 0 {
            return Err(MilError::config("dims", "D, M and L must all be >= 1"));
        }
        if self.hidden.contains(&0) {
            return Err(MilError::config("dims", "hidden widths must be >= 1"));
        }
        Ok(())
    }
}

/// Dense layer with row-major `out × in` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Layer {
            in_dim,
            out_dim,
            weight: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    pub fn row(&self, o: usize) -> &[T] {
        &self.weight[o * self.in_dim..(o + 1) * self.in_dim]
    }

    pub(crate) fn apply(&self, input: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(
            (0..self.out_dim).map(|o| crate::scalar::dot(self.row(o), input) + self.bias[o]),
        );
    }
}

/// Instance embedder f_φ: rectifier on hidden layers, linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedder<T> {
    pub layers: Vec<Layer<T>>,
}

/// Attention scorer: `score = vᵀ softsign(U g)`, with `U` stored `L × M` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attention<T> {
    pub embed_dim: usize,
    pub attention_dim: usize,
    pub u: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> Attention<T> {
    pub fn u_row(&self, l: usize) -> &[T] {
        &self.u[l * self.embed_dim..(l + 1) * self.embed_dim]
    }
}

/// Affine head on the pooled vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier<T> {
    pub w: Vec<T>,
    pub b: T,
}

/// Every learned tensor of the network. Also the shape of its gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params<T> {
    pub embedder: Embedder<T>,
    pub attention: Attention<T>,
    pub classifier: Classifier<T>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(dims: &Dims) -> Self {
        Params {
            embedder: Embedder {
                layers: dims
                    .layer_shapes()
                    .into_iter()
                    .map(|(i, o)| Layer::zeros(i, o))
                    .collect(),
            },
            attention: Attention {
                embed_dim: dims.embed_dim,
                attention_dim: dims.attention_dim,
                u: vec![T::zero(); dims.attention_dim * dims.embed_dim],
                v: vec![T::zero(); dims.attention_dim],
            },
            classifier: Classifier {
                w: vec![T::zero(); dims.embed_dim],
                b: T::zero(),
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(T::zero());
        }
        z
    }

    /// Tensors in a fixed order: each layer's weight then bias, U, v, w_c, b_c.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::with_capacity(2 * self.embedder.layers.len() + 4);
        for layer in &self.embedder.layers {
            out.push(&layer.weight);
            out.push(&layer.bias);
        }
        out.push(&self.attention.u);
        out.push(&self.attention.v);
        out.push(&self.classifier.w);
        out.push(std::slice::from_ref(&self.classifier.b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::with_capacity(2 * self.embedder.layers.len() + 4);
        for layer in &mut self.embedder.layers {
            out.push(&mut layer.weight);
            out.push(&mut layer.bias);
        }
        out.push(&mut self.attention.u);
        out.push(&mut self.attention.v);
        out.push(&mut self.classifier.w);
        out.push(std::slice::from_mut(&mut self.classifier.b));
        out
    }

    /// Human-readable name of tensor `i` in [`Params::tensors`] order.
    pub fn tensor_name(&self, i: usize) -> String {
        let n = self.embedder.layers.len();
        match i {
            i if i < 2 * n => format!(
                "embedder[{}].{}",
                i / 2,
                if i % 2 == 0 { "weight" } else { "bias" }
            ),
            i if i == 2 * n => "attention.U".into(),
            i if i == 2 * n + 1 => "attention.v".into(),
            i if i == 2 * n + 2 => "classifier.w".into(),
            _ => "classifier.b".into(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// True when `other` has the same tensor layout.
    pub fn same_shape(&self, other: &Params<T>) -> bool {
        let (a, b) = (self.tensors(), other.tensors());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
    }
}

/// The full bag classifier plus its adaptive-weighting multiplier λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilModel<T> {
    pub dims: Dims,
    /// Multiplier on pseudo-negative contributions; λ = 1 is plain attention pooling.
    pub lambda: T,
    pub params: Params<T>,
    /// Seed the parameters were initialized from.
    pub seed: u64,
    /// Epoch this checkpoint was taken at, if it came from training.
    pub epoch: Option<usize>,
}

impl<T: Scalar> MilModel<T> {
    /// All-zero parameters.
    pub fn zeros(dims: Dims, lambda: T) -> Result<Self> {
        dims.validate()?;
        let model = MilModel {
            params: Params::zeros(&dims),
            dims,
            lambda,
            seed: 0,
            epoch: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_lambda(mut self, lambda: T) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if !(self.lambda >= T::one()) {
            return Err(MilError::config("lambda", format!("{} < 1", self.lambda)));
        }
        let shapes = self.dims.layer_shapes();
        let layers = &self.params.embedder.layers;
        if layers.len() != shapes.len() {
            return Err(MilError::Dimension(format!(
                "{} embedder layers, dims call for {}",
                layers.len(),
                shapes.len()
            )));
        }
        for (k, (layer, &(i, o))) in layers.iter().zip(&shapes).enumerate() {
            if layer.in_dim != i
                || layer.out_dim != o
                || layer.weight.len() != i * o
                || layer.bias.len() != o
            {
                return Err(MilError::Dimension(format!(
                    "embedder layer {k} is not {o}x{i}"
                )));
            }
        }
        let (m, l) = (self.dims.embed_dim, self.dims.attention_dim);
        let att = &self.params.attention;
        if att.embed_dim != m || att.attention_dim != l || att.u.len() != l * m || att.v.len() != l
        {
            return Err(MilError::Dimension(format!(
                "attention is not U {l}x{m}, v {l}"
            )));
        }
        if self.params.classifier.w.len() != m {
            return Err(MilError::Dimension(format!(
                "classifier weight is not length {m}"
            )));
        }
        if !self.params.is_finite() {
            return Err(MilError::config("params", "non-finite parameter"));
        }
        Ok(())
    }
}
