//! Inference-mode batch normalization.
//!
//! Per channel `c`: `(x - mean_c) / sqrt(var_c + eps) * gamma_c + beta_c`.
//! The linearization drops `mean` and `beta`, leaving a diagonal scaling that
//! is its own transpose.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const DEFAULT_BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct BnParams<T: Real = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
    pub epsilon: f64,
}

impl<T: Real> BnParams<T> {
    pub fn new(gamma: Tensor<T>, beta: Tensor<T>, mean: Tensor<T>, var: Tensor<T>, epsilon: f64) -> Result<Self> {
        let c = gamma.len();
        for (name, t) in [("gamma", &gamma), ("beta", &beta), ("mean", &mean), ("var", &var)] {
            if t.shape() != [c] {
                return Err(Error::InvalidArgument(format!(
                    "bn {name} has shape {:?}, expected [{c}]",
                    t.shape()
                )));
            }
        }
        if var.data().iter().any(|&v| v < T::zero()) {
            return Err(Error::InvalidArgument("bn running variance is negative".into()));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!("bn epsilon {epsilon} must be >= 0")));
        }
        Ok(Self {
            gamma,
            beta,
            mean,
            var,
            epsilon,
        })
    }

    /// `gamma = 1, beta = 0, mean = 0, var = 1`.
    pub fn identity(channels: usize) -> Self {
        let ones = Tensor::full(&[channels], T::one()).expect("channels >= 1");
        let zeros = ones.zeros_like();
        Self {
            gamma: ones.clone(),
            beta: zeros.clone(),
            mean: zeros,
            var: ones,
            epsilon: DEFAULT_BN_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Per-channel slope `gamma / sqrt(var + eps)`.
    pub fn scale(&self) -> Vec<T> {
        self.gamma
            .data()
            .iter()
            .zip(self.var.data())
            .map(|(&g, &v)| T::from_f64(g.as_f64() / (v.as_f64() + self.epsilon).sqrt()))
            .collect()
    }

    fn check(&self, x: &Tensor<T>) -> Result<(usize, usize)> {
        let c = x.shape()[0];
        if c != self.channels() {
            let mut expected = x.shape().to_vec();
            expected[0] = self.channels();
            return Err(Error::shape(&expected, x.shape()));
        }
        Ok((c, x.len() / c))
    }
}

pub fn bn_forward<T: Real>(p: &BnParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, plane) = p.check(x)?;
    let scale = p.scale();
    let mut out = x.clone();
    for ch in 0..c {
        let (s, m, b) = (scale[ch], p.mean.data()[ch], p.beta.data()[ch]);
        for v in &mut out.data_mut()[ch * plane..(ch + 1) * plane] {
            *v = (*v - m) * s + b;
        }
    }
    Ok(out)
}

pub fn bn_jvp<T: Real>(p: &BnParams<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, plane) = p.check(v)?;
    let scale = p.scale();
    let mut out = v.clone();
    for ch in 0..c {
        let s = scale[ch];
        for x in &mut out.data_mut()[ch * plane..(ch + 1) * plane] {
            *x = *x * s;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Distribution, RngStream};
    use crate::tensor::inner_product;

    fn params(gamma: f64, beta: f64, mean: f64, var: f64, eps: f64) -> BnParams<f64> {
        let t = |x| Tensor::full(&[1], x).unwrap();
        BnParams::new(t(gamma), t(beta), t(mean), t(var), eps).unwrap()
    }

    fn random_params(rng: &mut RngStream, c: usize) -> BnParams<f32> {
        let g: Tensor = rng.sample(&[c], Distribution::Gaussian).unwrap();
        let b: Tensor = rng.sample(&[c], Distribution::Gaussian).unwrap();
        let m: Tensor = rng.sample(&[c], Distribution::Gaussian).unwrap();
        let v: Tensor = rng.sample::<f32>(&[c], Distribution::Uniform).unwrap().map(|x| x + 1.5);
        BnParams::new(g, b, m, v, DEFAULT_BN_EPSILON).unwrap()
    }

    #[test]
    fn unit_parameters_give_identity() {
        let p = params(1.0, 0.0, 0.0, 1.0, 0.0);
        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, -2.0, 3.5, 0.0]).unwrap();
        assert_eq!(bn_forward(&p, &x).unwrap(), x);
    }

    #[test]
    fn formula_arithmetic() {
        let eps = 1e-5;
        let p = params(3.0, 1.0, 2.0, 4.0 - eps, eps);
        let x = Tensor::full(&[1, 1, 1], 4.0).unwrap();
        assert!((bn_forward(&p, &x).unwrap().data()[0] - 4.0).abs() < 1e-12);

        let p = params(2.0, 0.0, 0.0, 4.0 - eps, eps);
        let v = Tensor::full(&[1, 3, 1], 0.7).unwrap();
        let out = bn_jvp(&p, &v).unwrap();
        for (a, b) in out.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_variance_is_guarded() {
        let p = params(1.0, 0.0, 0.0, 0.0, 1e-5);
        let x = Tensor::full(&[1, 2, 2], 3.0).unwrap();
        assert!(bn_forward(&p, &x).unwrap().data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn linearization_is_exact_and_self_adjoint() {
        let mut rng = RngStream::new(4, 0);
        let p = random_params(&mut rng, 3);
        let x: Tensor = rng.sample(&[3, 4, 4], Distribution::Gaussian).unwrap();
        let zero = x.zeros_like();
        // affinity: B(x) - B(0) = J_B x
        let lhs = bn_forward(&p, &x)
            .unwrap()
            .sub(&bn_forward(&p, &zero).unwrap())
            .unwrap();
        let rhs = bn_jvp(&p, &x).unwrap();
        for (a, b) in lhs.data().iter().zip(rhs.data()) {
            assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()));
        }
        for _ in 0..100 {
            let v: Tensor = rng.sample(&[3, 4, 4], Distribution::Gaussian).unwrap();
            let u: Tensor = rng.sample(&[3, 4, 4], Distribution::Gaussian).unwrap();
            let a = inner_product(&bn_jvp(&p, &v).unwrap(), &u).unwrap();
            let b = inner_product(&v, &bn_jvp(&p, &u).unwrap()).unwrap();
            assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn finite_difference_is_exact_for_affine_map() {
        let mut rng = RngStream::new(8, 0);
        let p: BnParams<f64> = {
            let f = random_params(&mut rng, 2);
            BnParams::new(f.gamma.cast(), f.beta.cast(), f.mean.cast(), f.var.cast(), f.epsilon).unwrap()
        };
        let x: Tensor<f64> = rng.sample(&[2, 3, 3], Distribution::Gaussian).unwrap();
        let v: Tensor<f64> = rng.sample(&[2, 3, 3], Distribution::Gaussian).unwrap();
        let h = 1e-3;
        let diff = bn_forward(&p, &x.axpy(h, &v).unwrap())
            .unwrap()
            .sub(&bn_forward(&p, &x).unwrap())
            .unwrap();
        let jv = bn_jvp(&p, &v).unwrap().scale(h);
        for (a, b) in diff.data().iter().zip(jv.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
