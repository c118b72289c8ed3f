//! Classifier head: global average pooling, affine map, softmax
//! cross-entropy.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct HeadParams<T: Real = f32> {
    /// `(K, C)`
    pub fc_weight: Tensor<T>,
    /// `(K)`
    pub fc_bias: Tensor<T>,
}

impl<T: Real> HeadParams<T> {
    pub fn new(fc_weight: Tensor<T>, fc_bias: Tensor<T>) -> Result<Self> {
        let [k, _] = *fc_weight.shape() else {
            return Err(Error::InvalidArgument(format!(
                "fc weight must be (K, C), got {:?}",
                fc_weight.shape()
            )));
        };
        fc_bias.ensure_shape(&[k])?;
        Ok(Self { fc_weight, fc_bias })
    }

    pub fn classes(&self) -> usize {
        self.fc_weight.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.fc_weight.shape()[1]
    }

    fn pool(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        let (c, h, w) = x.chw()?;
        if c != self.channels() {
            return Err(Error::shape(&[self.channels(), h, w], x.shape()));
        }
        let plane = h * w;
        Ok(x.data()
            .chunks(plane)
            .map(|p| T::from_f64(p.iter().map(|v| v.as_f64()).sum::<f64>() / plane as f64))
            .collect())
    }

    fn affine(&self, pooled: &[T], with_bias: bool) -> Tensor<T> {
        let c = self.channels();
        let logits = (0..self.classes())
            .map(|k| {
                let row = &self.fc_weight.data()[k * c..(k + 1) * c];
                let mut acc: f64 = row.iter().zip(pooled).map(|(w, p)| w.as_f64() * p.as_f64()).sum();
                if with_bias {
                    acc += self.fc_bias.data()[k].as_f64();
                }
                T::from_f64(acc)
            })
            .collect();
        Tensor::from_vec(&[self.classes()], logits).expect("classes >= 1")
    }
}

pub fn head_forward<T: Real>(p: &HeadParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(p.affine(&p.pool(x)?, true))
}

/// Linear part of the head: `v -> W * pool(v)`.
pub fn head_jvp<T: Real>(p: &HeadParams<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(p.affine(&p.pool(v)?, false))
}

/// Transpose of [`head_jvp`]: every spatial position of channel `c` receives
/// `(W^T u)_c / (H W)`.
pub fn head_vjp<T: Real>(p: &HeadParams<T>, u: &Tensor<T>, map_shape: &[usize]) -> Result<Tensor<T>> {
    u.ensure_shape(&[p.classes()])?;
    let [c, h, w] = *map_shape else {
        return Err(Error::InvalidArgument(format!("expected (C, H, W), got {map_shape:?}")));
    };
    if c != p.channels() {
        return Err(Error::shape(&[p.channels(), h, w], map_shape));
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(c * plane);
    for ch in 0..c {
        let g: f64 = (0..p.classes())
            .map(|k| p.fc_weight.data()[k * c + ch].as_f64() * u.data()[k].as_f64())
            .sum();
        out.extend(std::iter::repeat(T::from_f64(g / plane as f64)).take(plane));
    }
    Tensor::from_vec(map_shape, out)
}

/// Softmax cross-entropy against `label`, with max-subtraction. Returns the
/// loss and `softmax(logits) - onehot(label)`.
pub fn softmax_xent<T: Real>(logits: &Tensor<T>, label: usize) -> Result<(f64, Tensor<T>)> {
    let k = logits.len();
    if label >= k {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    let z: Vec<f64> = logits.data().iter().map(|x| x.as_f64()).collect();
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (z[label] - max);
    let grad = exps
        .iter()
        .enumerate()
        .map(|(i, &e)| T::from_f64(e / sum - if i == label { 1.0 } else { 0.0 }))
        .collect();
    Ok((loss, Tensor::from_vec(logits.shape(), grad)?))
}
