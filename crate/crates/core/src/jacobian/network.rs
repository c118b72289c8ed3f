//! Linearizations of the network's building blocks at a recorded trace.
//!
//! For a residual unit
//!
//! ```text
//! J   = diag(outer) (alpha S + J_R)
//! J_R = J_B2 C2 diag(inner) J_B1 C1
//! J^T = (alpha S^T + J_R^T) diag(outer)
//! ```
//!
//! where `S` is the identity or the linearized projection shortcut. The masks
//! are frozen from the clean pass; applying the operator never re-thresholds.

use crate::error::{Error, Result};
use crate::jacobian::operator::{check_len, stage_operator, ChainOperator, DiagonalOperator, LinearOperator};
use crate::model::{ActivationTrace, Network, UnitId, UnitParams, UnitTrace};
use crate::ops::{bn_jvp, conv_forward, conv_vjp, head_jvp, head_vjp, softmax_xent, BnParams, ConvParams, HeadParams};
use crate::tensor::{Real, Tensor};

fn to_tensor<T: Real>(v: &[f64], shape: &[usize]) -> Result<Tensor<T>> {
    check_len(v, shape)?;
    Tensor::from_f64_slice(shape, v)
}

/// Jacobian of one residual unit.
pub struct UnitJacobian<'a, T: Real> {
    params: &'a UnitParams<T>,
    trace: &'a UnitTrace<T>,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

impl<'a, T: Real> UnitJacobian<'a, T> {
    pub fn new(params: &'a UnitParams<T>, trace: &'a UnitTrace<T>) -> Result<Self> {
        let l = &params.layout;
        if trace.id != l.id {
            return Err(Error::InvalidArgument(format!(
                "trace of {} used for {}",
                trace.id, l.id
            )));
        }
        trace.input.ensure_shape(&l.in_shape)?;
        trace.outer_mask.ensure_shape(&l.out_shape)?;
        trace.inner_mask.ensure_shape(&l.out_shape)?;
        Ok(Self {
            params,
            trace,
            in_shape: l.in_shape.to_vec(),
            out_shape: l.out_shape.to_vec(),
        })
    }

    pub fn id(&self) -> UnitId {
        self.params.layout.id
    }

    /// `J_R v`
    pub fn residual_jvp(&self, v: &Tensor<T>) -> Result<Tensor<T>> {
        let p = self.params;
        let a = bn_jvp(&p.bn1, &conv_forward(&p.conv1, v)?)?;
        let a = a.mul(&self.trace.inner_mask)?;
        bn_jvp(&p.bn2, &conv_forward(&p.conv2, &a)?)
    }

    fn shortcut_jvp(&self, v: &Tensor<T>) -> Result<Tensor<T>> {
        match &self.params.shortcut {
            None => Ok(v.clone()),
            Some((c, b)) => bn_jvp(b, &conv_forward(c, v)?),
        }
    }

    pub fn jvp(&self, v: &Tensor<T>) -> Result<Tensor<T>> {
        v.ensure_shape(&self.in_shape)?;
        let r = self.residual_jvp(v)?;
        let s = self.shortcut_jvp(v)?;
        r.axpy(self.params.skip_scale, &s)?.mul(&self.trace.outer_mask)
    }

    pub fn vjp(&self, u: &Tensor<T>) -> Result<Tensor<T>> {
        u.ensure_shape(&self.out_shape)?;
        let p = self.params;
        let w = u.mul(&self.trace.outer_mask)?;
        let r = conv_vjp(&p.conv2, &bn_jvp(&p.bn2, &w)?)?;
        let r = r.mul(&self.trace.inner_mask)?;
        let r = conv_vjp(&p.conv1, &bn_jvp(&p.bn1, &r)?)?;
        let s = match &p.shortcut {
            None => w,
            Some((c, b)) => conv_vjp(c, &bn_jvp(b, &w)?)?,
        };
        r.axpy(p.skip_scale, &s)
    }
}

impl<T: Real> LinearOperator for UnitJacobian<'_, T> {
    fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jvp(&to_tensor(v, &self.in_shape)?)?.to_f64_vec())
    }
    fn apply_transpose(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.vjp(&to_tensor(u, &self.out_shape)?)?.to_f64_vec())
    }
    fn describe(&self) -> String {
        format!("unit {} {:?} -> {:?}", self.id(), self.in_shape, self.out_shape)
    }
}

/// Jacobian of the stem `sigma(B(C x))` with respect to the normalized input.
pub struct StemJacobian<'a, T: Real> {
    conv: &'a ConvParams<T>,
    bn: &'a BnParams<T>,
    mask: &'a Tensor<T>,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

impl<T: Real> LinearOperator for StemJacobian<'_, T> {
    fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let v = to_tensor::<T>(v, &self.in_shape)?;
        Ok(bn_jvp(self.bn, &conv_forward(self.conv, &v)?)?
            .mul(self.mask)?
            .to_f64_vec())
    }
    fn apply_transpose(&self, u: &[f64]) -> Result<Vec<f64>> {
        let u = to_tensor::<T>(u, &self.out_shape)?.mul(self.mask)?;
        Ok(conv_vjp(self.conv, &bn_jvp(self.bn, &u)?)?.to_f64_vec())
    }
    fn describe(&self) -> String {
        "stem".into()
    }
}

/// Linear part of the classifier head (pooling + fc), map to logits.
pub struct HeadJacobian<'a, T: Real> {
    head: &'a HeadParams<T>,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

impl<T: Real> LinearOperator for HeadJacobian<'_, T> {
    fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(head_jvp(self.head, &to_tensor::<T>(v, &self.in_shape)?)?.to_f64_vec())
    }
    fn apply_transpose(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(head_vjp(self.head, &to_tensor::<T>(u, &self.out_shape)?, &self.in_shape)?.to_f64_vec())
    }
    fn describe(&self) -> String {
        "head".into()
    }
}

impl<T: Real> Network<T> {
    /// Jacobian of unit `id`, linearized at `trace`.
    pub fn unit_operator<'a>(&'a self, trace: &'a ActivationTrace<T>, id: UnitId) -> Result<UnitJacobian<'a, T>> {
        UnitJacobian::new(self.unit_params(id)?, trace.unit(id)?)
    }

    /// Same as [`Network::unit_operator`] for a bare unit trace, e.g. one
    /// produced by [`Network::unit_forward`].
    pub fn unit_operator_at<'a>(&'a self, trace: &'a UnitTrace<T>) -> Result<UnitJacobian<'a, T>> {
        UnitJacobian::new(self.unit_params(trace.id)?, trace)
    }

    /// Chain of all units of `stage` (1-based).
    pub fn stage_operator<'a>(&'a self, trace: &'a ActivationTrace<T>, stage: usize) -> Result<ChainOperator<'a>> {
        let n = self.spec().units_per_stage;
        let mut ops: Vec<Box<dyn LinearOperator + 'a>> = Vec::with_capacity(n);
        for u in 0..n {
            ops.push(Box::new(self.unit_operator(trace, UnitId::new(stage, u))?));
        }
        Ok(stage_operator(ops)?.with_label(format!("stage{stage}")))
    }

    pub fn normalization_operator(&self) -> DiagonalOperator {
        let shape = self.spec().input_shape;
        let plane = shape[1] * shape[2];
        let diag = self
            .input_scale()
            .iter()
            .flat_map(|s| std::iter::repeat(s.as_f64()).take(plane))
            .collect();
        DiagonalOperator::new(&shape, diag).expect("shape matches")
    }

    pub fn stem_operator<'a>(&'a self, trace: &'a ActivationTrace<T>) -> StemJacobian<'a, T> {
        let (conv, bn) = self.stem_params();
        StemJacobian {
            conv,
            bn,
            mask: &trace.stem_mask,
            in_shape: self.spec().input_shape.to_vec(),
            out_shape: self.spec().stem_shape().to_vec(),
        }
    }

    pub fn head_operator(&self) -> HeadJacobian<'_, T> {
        HeadJacobian {
            head: self.head_params(),
            in_shape: self.spec().stage_map_shape(3).to_vec(),
            out_shape: vec![self.spec().n_classes],
        }
    }

    /// Pixel-space image to the output map of unit `through` (inclusive).
    pub fn prefix_operator<'a>(&'a self, trace: &'a ActivationTrace<T>, through: UnitId) -> Result<ChainOperator<'a>> {
        let last = self.spec().unit_index(through)?;
        let mut ops: Vec<Box<dyn LinearOperator + 'a>> = vec![
            Box::new(self.normalization_operator()),
            Box::new(self.stem_operator(trace)),
        ];
        for i in 0..=last {
            ops.push(Box::new(self.unit_operator(trace, self.spec().unit_at(i))?));
        }
        Ok(ChainOperator::new(ops)?.with_label(format!("input..{through}")))
    }

    /// Pixel-space image to logits.
    pub fn network_operator<'a>(&'a self, trace: &'a ActivationTrace<T>) -> Result<ChainOperator<'a>> {
        let mut ops: Vec<Box<dyn LinearOperator + 'a>> = vec![
            Box::new(self.normalization_operator()),
            Box::new(self.stem_operator(trace)),
        ];
        for id in self.spec().units() {
            ops.push(Box::new(self.unit_operator(trace, id)?));
        }
        ops.push(Box::new(self.head_operator()));
        Ok(ChainOperator::new(ops)?.with_label("network"))
    }
}

/// Gradient of the cross-entropy loss with respect to the pixel-space image,
/// by pulling `softmax - onehot` back through head, units, stem and input
/// standardization.
pub fn input_gradient<T: Real>(net: &Network<T>, image: &Tensor<T>, label: usize) -> Result<Tensor<T>> {
    let (logits, trace) = net.forward(image)?;
    let (_, grad_logits) = softmax_xent(&logits, label)?;
    let op = net.network_operator(&trace)?;
    let g = op.apply_transpose(&grad_logits.to_f64_vec())?;
    Tensor::from_f64_slice(image.shape(), &g)
}
