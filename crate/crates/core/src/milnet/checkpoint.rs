//! Model checkpoints as a single JSON document with nested row-major arrays.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Attention, Classifier, Dims, Embedder, Layer, MilModel, Params};
use crate::error::{MilError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCheckpoint {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Values are written with serde_json's shortest round-trip formatting, so a
/// reload reproduces every `f64` bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub dims: Dims,
    pub lambda: f64,
    pub embedder: Vec<LayerCheckpoint>,
    #[serde(rename = "U")]
    pub u: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub w_c: Vec<f64>,
    pub b_c: f64,
    pub seed: u64,
    pub epoch: Option<usize>,
}

fn rows<T: Scalar>(flat: &[T], cols: usize) -> Vec<Vec<f64>> {
    flat.chunks(cols.max(1))
        .map(|r| r.iter().map(|x| x.as_f64()).collect())
        .collect()
}

fn flatten<T: Scalar>(
    rows: &[Vec<f64>],
    what: &str,
    n_rows: usize,
    n_cols: usize,
) -> Result<Vec<T>> {
    if rows.len() != n_rows || rows.iter().any(|r| r.len() != n_cols) {
        return Err(MilError::Dimension(format!(
            "{what} is not {n_rows}x{n_cols}"
        )));
    }
    Ok(rows.iter().flatten().map(|&x| T::of(x)).collect())
}

fn vector<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::of(x)).collect()
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &MilModel<T>) -> Self {
        let p = &model.params;
        Checkpoint {
            dims: model.dims.clone(),
            lambda: model.lambda.as_f64(),
            embedder: p
                .embedder
                .layers
                .iter()
                .map(|l| LayerCheckpoint {
                    weight: rows(&l.weight, l.in_dim),
                    bias: l.bias.iter().map(|x| x.as_f64()).collect(),
                })
                .collect(),
            u: rows(&p.attention.u, p.attention.embed_dim),
            v: p.attention.v.iter().map(|x| x.as_f64()).collect(),
            w_c: p.classifier.w.iter().map(|x| x.as_f64()).collect(),
            b_c: p.classifier.b.as_f64(),
            seed: model.seed,
            epoch: model.epoch,
        }
    }

    pub fn into_model<T: Scalar>(self) -> Result<MilModel<T>> {
        self.dims.validate()?;
        let shapes = self.dims.layer_shapes();
        if shapes.len() != self.embedder.len() {
            return Err(MilError::Dimension(format!(
                "{} layers in checkpoint, dims call for {}",
                self.embedder.len(),
                shapes.len()
            )));
        }
        let layers = self
            .embedder
            .iter()
            .zip(&shapes)
            .enumerate()
            .map(|(k, (l, &(i, o)))| {
                if l.bias.len() != o {
                    return Err(MilError::Dimension(format!(
                        "embedder[{k}].bias is not length {o}"
                    )));
                }
                Ok(Layer {
                    in_dim: i,
                    out_dim: o,
                    weight: flatten(&l.weight, &format!("embedder[{k}].weight"), o, i)?,
                    bias: vector(&l.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (m, l) = (self.dims.embed_dim, self.dims.attention_dim);
        let model = MilModel {
            params: Params {
                embedder: Embedder { layers },
                attention: Attention {
                    embed_dim: m,
                    attention_dim: l,
                    u: flatten(&self.u, "U", l, m)?,
                    v: vector(&self.v),
                },
                classifier: Classifier {
                    w: vector(&self.w_c),
                    b: T::of(self.b_c),
                },
            },
            dims: self.dims,
            lambda: T::of(self.lambda),
            seed: self.seed,
            epoch: self.epoch,
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn save_model<T: Scalar>(model: &MilModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(&Checkpoint::from_model(model))?;
    std::fs::write(path, json).map_err(|e| MilError::io(path, e))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<MilModel<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| MilError::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    ckpt.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::init_model;

    #[test]
    fn exact_reload() {
        let mut model = init_model::<f64>(&Dims::standard(5), 2.0, 21).unwrap();
        model.params.classifier.b = 0.1 + 0.2;
        model.epoch = Some(7);
        let json = serde_json::to_string(&Checkpoint::from_model(&model)).unwrap();
        assert!(json.contains("\"U\""));
        let back: MilModel<f64> = serde_json::from_str::<Checkpoint>(&json)
            .unwrap()
            .into_model()
            .unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn file_round_trip_and_shape_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = init_model::<f32>(&Dims::standard(3), 1.0, 2).unwrap();
        save_model(&model, &path).unwrap();
        assert_eq!(load_model::<f32>(&path).unwrap(), model);

        let mut ckpt = Checkpoint::from_model(&model);
        ckpt.u.pop();
        assert!(matches!(
            ckpt.into_model::<f32>(),
            Err(MilError::Dimension(_))
        ));
    }
}
