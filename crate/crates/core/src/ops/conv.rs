//! Bias-free 2-D cross-correlation with "same" zero padding, and its
//! transpose.
//!
//! Padding is always `(k - 1) / 2`, so with stride `s` an `H x W` input maps to
//! `H/s x W/s`. Direct loops; the innermost loop runs over a contiguous output
//! row.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct ConvParams<T: Real = f32> {
    kernel: Tensor<T>,
    stride: usize,
}

impl<T: Real> ConvParams<T> {
    pub fn new(kernel: Tensor<T>, stride: usize) -> Result<Self> {
        let [_, _, kh, kw] = *kernel.shape() else {
            return Err(Error::InvalidArgument(format!(
                "conv kernel must be (C_out, C_in, k, k), got {:?}",
                kernel.shape()
            )));
        };
        if kh != kw || kh % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "conv kernel must be square with odd size, got {kh}x{kw}"
            )));
        }
        if stride != 1 && stride != 2 {
            return Err(Error::InvalidArgument(format!("unsupported stride {stride}")));
        }
        Ok(Self { kernel, stride })
    }

    pub fn kernel(&self) -> &Tensor<T> {
        &self.kernel
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn padding(&self) -> usize {
        (self.kernel_size() - 1) / 2
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 3]> {
        let [c, h, w] = *input else {
            return Err(Error::InvalidArgument(format!("expected (C, H, W), got {input:?}")));
        };
        if c != self.in_channels() {
            return Err(Error::shape(&[self.in_channels(), h, w], input));
        }
        if h % self.stride != 0 || w % self.stride != 0 {
            return Err(Error::InvalidArgument(format!(
                "spatial extents {h}x{w} not divisible by stride {}",
                self.stride
            )));
        }
        Ok([self.out_channels(), h / self.stride, w / self.stride])
    }

    /// Output column range `[lo, hi)` for which input column
    /// `o * stride + k - pad` lies inside `[0, w_in)`.
    #[inline]
    fn valid_range(&self, k: usize, w_in: usize, w_out: usize) -> (usize, usize) {
        let pad = self.padding();
        let s = self.stride;
        // o * s + k >= pad
        let lo = if k >= pad { 0 } else { (pad - k).div_ceil(s) };
        // o * s + k - pad < w_in  <=>  o * s < w_in + pad - k
        let hi = (w_in + pad - k).div_ceil(s).min(w_out);
        (lo, hi.max(lo))
    }
}

pub fn conv_forward<T: Real>(p: &ConvParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let [c_out, h_out, w_out] = p.output_shape(x.shape())?;
    let (c_in, h_in, w_in) = x.chw()?;
    let k = p.kernel_size();
    let pad = p.padding();
    let s = p.stride();
    let kernel = p.kernel().data();
    let xin = x.data();
    let mut out = vec![T::zero(); c_out * h_out * w_out];

    for co in 0..c_out {
        let out_c = &mut out[co * h_out * w_out..(co + 1) * h_out * w_out];
        for ci in 0..c_in {
            let in_c = &xin[ci * h_in * w_in..(ci + 1) * h_in * w_in];
            for ky in 0..k {
                let (oy_lo, oy_hi) = p.valid_range(ky, h_in, h_out);
                for kx in 0..k {
                    let wgt = kernel[((co * c_in + ci) * k + ky) * k + kx];
                    if wgt == T::zero() {
                        continue;
                    }
                    let (ox_lo, ox_hi) = p.valid_range(kx, w_in, w_out);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * s + ky - pad;
                        let row_in = &in_c[iy * w_in..(iy + 1) * w_in];
                        let row_out = &mut out_c[oy * w_out..(oy + 1) * w_out];
                        for ox in ox_lo..ox_hi {
                            row_out[ox] = row_out[ox] + wgt * row_in[ox * s + kx - pad];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[c_out, h_out, w_out], out)
}

/// Multiplication by the transpose of the linear map [`conv_forward`], i.e.
/// transpose convolution. `u` has the forward output shape; the result has the
/// forward input shape `(C_in, H' * stride, W' * stride)`.
pub fn conv_vjp<T: Real>(p: &ConvParams<T>, u: &Tensor<T>) -> Result<Tensor<T>> {
    let (c_out, h_out, w_out) = u.chw()?;
    if c_out != p.out_channels() {
        return Err(Error::shape(&[p.out_channels(), h_out, w_out], u.shape()));
    }
    let c_in = p.in_channels();
    let (h_in, w_in) = (h_out * p.stride(), w_out * p.stride());
    let k = p.kernel_size();
    let pad = p.padding();
    let s = p.stride();
    let kernel = p.kernel().data();
    let gout = u.data();
    let mut gin = vec![T::zero(); c_in * h_in * w_in];

    for co in 0..c_out {
        let out_c = &gout[co * h_out * w_out..(co + 1) * h_out * w_out];
        for ci in 0..c_in {
            let in_c = &mut gin[ci * h_in * w_in..(ci + 1) * h_in * w_in];
            for ky in 0..k {
                let (oy_lo, oy_hi) = p.valid_range(ky, h_in, h_out);
                for kx in 0..k {
                    let wgt = kernel[((co * c_in + ci) * k + ky) * k + kx];
                    if wgt == T::zero() {
                        continue;
                    }
                    let (ox_lo, ox_hi) = p.valid_range(kx, w_in, w_out);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * s + ky - pad;
                        let row_out = &out_c[oy * w_out..(oy + 1) * w_out];
                        let row_in = &mut in_c[iy * w_in..(iy + 1) * w_in];
                        for ox in ox_lo..ox_hi {
                            let ix = ox * s + kx - pad;
                            row_in[ix] = row_in[ix] + wgt * row_out[ox];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[c_in, h_in, w_in], gin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Distribution, RngStream};
    use crate::tensor::inner_product;

    /// Brute-force cross-correlation straight from the definition.
    fn conv_oracle(kernel: &Tensor<f64>, stride: usize, x: &Tensor<f64>) -> Vec<f64> {
        let [co_n, ci_n, k, _] = *kernel.shape() else {
            unreachable!()
        };
        let [_, h, w] = *x.shape() else { unreachable!() };
        let pad = (k - 1) as isize / 2;
        let (ho, wo) = (h / stride, w / stride);
        let mut out = vec![0.0; co_n * ho * wo];
        for co in 0..co_n {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for ci in 0..ci_n {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad;
                                let ix = (ox * stride + kx) as isize - pad;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += kernel.get(&[co, ci, ky, kx]).unwrap()
                                    * x.get(&[ci, iy as usize, ix as usize]).unwrap();
                            }
                        }
                    }
                    out[(co * ho + oy) * wo + ox] = acc;
                }
            }
        }
        out
    }

    fn random_conv(rng: &mut RngStream, co: usize, ci: usize, k: usize, stride: usize) -> ConvParams<f64> {
        ConvParams::new(rng.sample(&[co, ci, k, k], Distribution::Gaussian).unwrap(), stride).unwrap()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut k = vec![0.0f32; 9];
        k[4] = 1.0;
        let p = ConvParams::new(Tensor::from_vec(&[1, 1, 3, 3], k).unwrap(), 1).unwrap();
        let x: Tensor = RngStream::new(0, 0).sample(&[1, 5, 6], Distribution::Uniform).unwrap();
        assert_eq!(conv_forward(&p, &x).unwrap(), x);
        assert_eq!(conv_vjp(&p, &x).unwrap(), x);
    }

    #[test]
    fn all_ones_kernel_on_small_map() {
        let p = ConvParams::new(Tensor::full(&[1, 1, 3, 3], 1.0f32).unwrap(), 1).unwrap();
        let x = Tensor::full(&[1, 2, 2], 1.0f32).unwrap();
        let y = conv_forward(&p, &x).unwrap();
        assert_eq!(y.data(), &[4.0; 4]);
        let oracle = conv_oracle(&p.kernel().cast(), 1, &x.cast());
        assert_eq!(oracle, vec![4.0; 4]);
    }

    #[test]
    fn stride_two_halves_extents() {
        let p = ConvParams::new(Tensor::full(&[1, 1, 3, 3], 1.0f32).unwrap(), 2).unwrap();
        let y = conv_forward(&p, &Tensor::full(&[1, 4, 4], 1.0).unwrap()).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let p = ConvParams::new(Tensor::full(&[2, 3, 3, 3], 1.0f32).unwrap(), 1).unwrap();
        assert!(conv_forward(&p, &Tensor::full(&[2, 4, 4], 1.0).unwrap()).is_err());
        assert!(conv_vjp(&p, &Tensor::full(&[3, 4, 4], 1.0).unwrap()).is_err());
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = RngStream::new(5, 0);
        for &(k, stride) in &[(1, 1), (3, 1), (1, 2), (3, 2)] {
            let p = random_conv(&mut rng, 3, 2, k, stride);
            let x = rng.sample(&[2, 6, 8], Distribution::Gaussian).unwrap();
            let y = conv_forward(&p, &x).unwrap();
            let oracle = conv_oracle(p.kernel(), stride, &x);
            for (a, b) in y.data().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_identity_over_random_pairs() {
        let mut rng = RngStream::new(9, 0);
        for &(k, stride) in &[(1, 1), (3, 1), (1, 2), (3, 2)] {
            let p: ConvParams<f32> = {
                let kern = rng.sample(&[3, 2, k, k], Distribution::Gaussian).unwrap();
                ConvParams::new(kern, stride).unwrap()
            };
            for _ in 0..100 {
                let x: Tensor = rng.sample(&[2, 8, 8], Distribution::Gaussian).unwrap();
                let u: Tensor = rng
                    .sample(&[3, 8 / stride, 8 / stride], Distribution::Gaussian)
                    .unwrap();
                let lhs = inner_product(&conv_forward(&p, &x).unwrap(), &u).unwrap();
                let rhs = inner_product(&x, &conv_vjp(&p, &u).unwrap()).unwrap();
                let scale = crate::tensor::l2_norm(&conv_forward(&p, &x).unwrap()) * crate::tensor::l2_norm(&u);
                assert!((lhs - rhs).abs() <= 1e-4 * scale, "k={k} s={stride}: {lhs} vs {rhs}");
            }
        }
    }

    /// Materializes both maps by unit-vector probing and compares them as
    /// transposes of each other.
    #[test]
    fn materialized_vjp_is_transpose_of_forward() {
        let mut rng = RngStream::new(13, 0);
        for &(c_in, h, k, stride) in &[(1, 4, 3, 1), (4, 8, 3, 2), (4, 8, 1, 2), (2, 8, 3, 1)] {
            let c_out = if c_in == 1 { 1 } else { 3 };
            let p: ConvParams<f32> = ConvParams::new(
                rng.sample(&[c_out, c_in, k, k], Distribution::Gaussian).unwrap(),
                stride,
            )
            .unwrap();
            let n = c_in * h * h;
            let ho = h / stride;
            let m = c_out * ho * ho;
            let mut fwd = vec![0.0f32; m * n];
            for j in 0..n {
                let mut e = Tensor::zeros(&[c_in, h, h]).unwrap();
                e.data_mut()[j] = 1.0;
                let col = conv_forward(&p, &e).unwrap();
                for i in 0..m {
                    fwd[i * n + j] = col.data()[i];
                }
            }
            for i in 0..m {
                let mut e = Tensor::zeros(&[c_out, ho, ho]).unwrap();
                e.data_mut()[i] = 1.0;
                let row = conv_vjp(&p, &e).unwrap();
                for j in 0..n {
                    assert!((row.data()[j] - fwd[i * n + j]).abs() <= 1e-6);
                }
            }
        }
    }
}
