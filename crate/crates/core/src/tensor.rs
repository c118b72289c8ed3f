//! Dense rank-1..4 tensors in row-major layout.
//!
//! Activation maps are stored `(C, H, W)`, convolution kernels
//! `(C_out, C_in, k, k)`. Storage is `f32` by default; the same code runs in
//! `f64` when a computation needs more headroom than single precision gives
//! (second-order Taylor remainders, for instance). Reductions always
//! accumulate in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

use crate::error::{Error, Result};

pub const MAX_RANK: usize = 4;

/// Scalar type a [`Tensor`] can hold.
pub trait Real: Float + Sum + Default + Debug + Display + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T: Real = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::Construction(format!(
            "rank {} outside 1..={MAX_RANK}",
            shape.len()
        )));
    }
    if let Some(pos) = shape.iter().position(|&e| e == 0) {
        return Err(Error::Construction(format!("extent {pos} is zero")));
    }
    Ok(shape.iter().product())
}

impl<T: Real> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::Construction(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    /// Zero tensor with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: vec![T::zero(); self.data.len()],
        }
    }

    pub fn from_f64_slice(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&x| T::from_f64(x)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Element at a multi-index, row-major.
    pub fn get(&self, index: &[usize]) -> Option<T> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut flat = 0;
        for (&i, &e) in index.iter().zip(&self.shape) {
            if i >= e {
                return None;
            }
            flat = flat * e + i;
        }
        Some(self.data[flat])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::from_vec(shape, self.data.clone())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.as_f64()).collect()
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::from_f64(x.as_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    pub fn ensure_shape(&self, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(Error::shape(expected, &self.shape));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        other.ensure_shape(&self.shape)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Element-wise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    /// `self + c * other`
    pub fn axpy(&self, c: T, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + c * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.as_f64().abs()))
    }

    /// Channel extent of a `(C, H, W)` map.
    pub(crate) fn chw(&self) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::InvalidArgument(format!(
                "expected a (C, H, W) map, got shape {:?}",
                self.shape
            ))),
        }
    }
}

/// `Σ a_i b_i`, accumulated in `f64`.
pub fn inner_product<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    b.ensure_shape(a.shape())?;
    Ok(dot(a.data(), b.data()))
}

pub fn l2_norm<T: Real>(a: &Tensor<T>) -> f64 {
    norm(a.data())
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x.as_f64() * y.as_f64()).sum()
}

pub(crate) fn norm<T: Real>(a: &[T]) -> f64 {
    a.iter()
        .map(|&x| {
            let x = x.as_f64();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_fill() {
        let t = Tensor::<f32>::zeros(&[2, 2]).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
    }

    #[test]
    fn row_major_layout() {
        let t = Tensor::from_vec(&[1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.get(&[0, 1, 0]), Some(3.0));
        assert_eq!(t.get(&[0, 2, 0]), None);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let err = Tensor::from_vec(&[3, 2], vec![0.0f32; 5]).unwrap_err();
        assert!(matches!(err, Error::Construction(_)));
        assert!(Tensor::<f32>::zeros(&[3, 0]).is_err());
        assert!(Tensor::<f32>::zeros(&[1, 1, 1, 1, 1]).is_err());
    }

    #[test]
    fn inner_product_and_norm() {
        let a = Tensor::from_vec(&[2], vec![1.0f32, 2.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![3.0f32, 4.0]).unwrap();
        assert_eq!(inner_product(&a, &b).unwrap(), 11.0);
        assert_eq!(l2_norm(&b), 5.0);
        assert_eq!(l2_norm(&Tensor::<f32>::zeros(&[7]).unwrap()), 0.0);
        assert_eq!(l2_norm(&Tensor::<f32>::full(&[4096], 1.0).unwrap()), 64.0);
        let c = Tensor::<f32>::zeros(&[3]).unwrap();
        assert!(inner_product(&a, &c).is_err());
    }

    #[test]
    fn unit_vector_has_unit_self_product() {
        let x = Tensor::from_vec(&[3], vec![0.6f64, 0.0, 0.8]).unwrap();
        assert!((inner_product(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gram_schmidt_pair_is_orthogonal() {
        // QR of a random 8x2 matrix via classical Gram-Schmidt.
        use crate::rng::{Distribution, RngStream};
        let m = RngStream::new(3, 1).sample_vec(16, Distribution::Gaussian);
        let (c0, c1): (Vec<f64>, Vec<f64>) = (m[..8].to_vec(), m[8..].to_vec());
        let n0 = norm(&c0);
        let q0: Vec<f64> = c0.iter().map(|x| x / n0).collect();
        let r = dot(&q0, &c1);
        let w: Vec<f64> = c1.iter().zip(&q0).map(|(c, q)| c - r * q).collect();
        let nw = norm(&w);
        let q1: Vec<f64> = w.iter().map(|x| x / nw).collect();
        let a = Tensor::from_vec(&[8], q0).unwrap();
        let b = Tensor::from_vec(&[8], q1).unwrap();
        assert!(inner_product(&a, &b).unwrap().abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn inner_product_is_homogeneous(
            a in proptest::collection::vec(-10.0f32..10.0, 1..64),
            c in -5.0f32..5.0,
            seed in 0u64..1000,
        ) {
            let n = a.len();
            let b: Vec<f32> = (0..n).map(|i| ((i as u64 * 31 + seed) % 17) as f32 - 8.0).collect();
            let ta = Tensor::from_vec(&[n], a).unwrap();
            let tb = Tensor::from_vec(&[n], b).unwrap();
            let lhs = inner_product(&ta.scale(c), &tb).unwrap();
            let rhs = c as f64 * inner_product(&ta, &tb).unwrap();
            let scale = (c as f64).abs() * ta.data().iter().zip(tb.data()).map(|(x, y)| (x * y).abs() as f64).sum::<f64>();
            prop_assert!((lhs - rhs).abs() <= 1e-6 * scale.max(1e-30));
        }

        #[test]
        fn norm_squared_is_self_product(a in proptest::collection::vec(-100.0f32..100.0, 1..128)) {
            let t = Tensor::from_vec(&[a.len()], a).unwrap();
            let n = l2_norm(&t);
            let ip = inner_product(&t, &t).unwrap();
            prop_assert!((n * n - ip).abs() <= 1e-10 * ip.max(1e-300));
        }

        #[test]
        fn reshape_round_trip_is_bit_exact(
            c in 1usize..4, h in 1usize..5, w in 1usize..5, seed in 0u64..100,
        ) {
            let data: Vec<f32> = (0..c * h * w).map(|i| ((i as u64 ^ seed) as f32).sin()).collect();
            let t = Tensor::from_vec(&[c, h, w], data).unwrap();
            let back = t.reshape(&[c * h * w]).unwrap().reshape(&[c, h, w]).unwrap();
            prop_assert_eq!(
                t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                back.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
