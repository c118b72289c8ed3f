//! Traced forward passes.
//!
//! Each residual unit computes `x_{k+1} = sigma(alpha * S(x_k) + R(x_k))` with
//! `R = B2 C2 sigma(B1 C1 x_k)` and `S` the identity or, for downsampling
//! units, a 1x1 stride-2 convolution followed by BN.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::spec::{NetworkSpec, UnitId, UnitLayout};
use crate::model::weights::{blend_weights, WeightStore};
use crate::ops::{
    act_forward, bn_forward, conv_forward, head_forward, softmax_xent, Activation, BnParams, ConvParams, HeadParams,
    DEFAULT_BN_EPSILON,
};
use crate::rng::RngStream;
use crate::tensor::{Real, Tensor};

/// Per-channel input standardization applied before the stem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for Normalization {
    /// CIFAR-10 channel statistics.
    fn default() -> Self {
        Self {
            mean: [0.4914, 0.4822, 0.4465],
            std: [0.2470, 0.2435, 0.2616],
        }
    }
}

impl Normalization {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid normalization {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightBlend {
    pub t: f64,
    pub noise_seed: u64,
}

/// In-memory modification of one residual unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitOverride {
    pub skip_scale: f64,
    pub weight_blend: Option<WeightBlend>,
}

impl Default for UnitOverride {
    fn default() -> Self {
        Self {
            skip_scale: 1.0,
            weight_blend: None,
        }
    }
}

impl UnitOverride {
    pub fn skip_scale(alpha: f64) -> Self {
        Self {
            skip_scale: alpha,
            ..Self::default()
        }
    }

    pub fn blend(t: f64, noise_seed: u64) -> Self {
        Self {
            weight_blend: Some(WeightBlend { t, noise_seed }),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.skip_scale.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "skip scale {} is not finite",
                self.skip_scale
            )));
        }
        if let Some(b) = self.weight_blend {
            if !(0.0..=1.0).contains(&b.t) {
                return Err(Error::InvalidArgument(format!("blend t = {} outside [0, 1]", b.t)));
            }
        }
        Ok(())
    }
}

pub type Overrides = BTreeMap<UnitId, UnitOverride>;

#[derive(Debug, Clone)]
pub struct UnitParams<T: Real> {
    pub layout: UnitLayout,
    pub conv1: ConvParams<T>,
    pub bn1: BnParams<T>,
    pub conv2: ConvParams<T>,
    pub bn2: BnParams<T>,
    pub shortcut: Option<(ConvParams<T>, BnParams<T>)>,
    pub skip_scale: T,
}

/// Recorded state of one residual unit during a forward pass.
#[derive(Debug, Clone)]
pub struct UnitTrace<T: Real = f32> {
    pub id: UnitId,
    /// `x_k`
    pub input: Tensor<T>,
    /// `R(x_k)`
    pub residual: Tensor<T>,
    /// `alpha * S(x_k) + R(x_k)`
    pub pre_activation: Tensor<T>,
    /// `x_{k+1}`
    pub output: Tensor<T>,
    /// `sigma'(B1 C1 x_k)`
    pub inner_mask: Tensor<T>,
    /// `sigma'(alpha * S(x_k) + R(x_k))`
    pub outer_mask: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct ActivationTrace<T: Real = f32> {
    /// Pixel-space input.
    pub image: Tensor<T>,
    /// Input after per-channel standardization.
    pub normalized: Tensor<T>,
    pub stem_mask: Tensor<T>,
    pub stem_output: Tensor<T>,
    /// Units in forward order.
    pub units: Vec<UnitTrace<T>>,
    pub logits: Tensor<T>,
}

impl<T: Real> ActivationTrace<T> {
    pub fn unit(&self, id: UnitId) -> Result<&UnitTrace<T>> {
        self.units.iter().find(|u| u.id == id).ok_or(Error::UnitOutOfRange {
            stage: id.stage,
            unit: id.unit,
        })
    }
}

/// A network ready for inference: spec, weights converted to `T`, input
/// normalization and unit overrides.
#[derive(Debug, Clone)]
pub struct Network<T: Real = f32> {
    spec: NetworkSpec,
    normalization: Normalization,
    overrides: Overrides,
    stem_conv: ConvParams<T>,
    stem_bn: BnParams<T>,
    units: Vec<UnitParams<T>>,
    head: HeadParams<T>,
}

fn conv<T: Real>(store: &WeightStore, name: &str, stride: usize) -> Result<ConvParams<T>> {
    ConvParams::new(store.get(name)?.cast(), stride)
}

fn bn<T: Real>(store: &WeightStore, prefix: &str) -> Result<BnParams<T>> {
    let get = |f: &str| store.get(&format!("{prefix}.{f}")).map(|t| t.cast());
    BnParams::new(
        get("gamma")?,
        get("beta")?,
        get("mean")?,
        get("var")?,
        DEFAULT_BN_EPSILON,
    )
}

impl<T: Real> Network<T> {
    pub fn new(spec: &NetworkSpec, store: &WeightStore) -> Result<Self> {
        Self::with_options(spec, store, Normalization::default(), Overrides::new())
    }

    pub fn with_options(
        spec: &NetworkSpec,
        store: &WeightStore,
        normalization: Normalization,
        overrides: Overrides,
    ) -> Result<Self> {
        store.validate(spec)?;
        normalization.validate()?;
        let mut effective = None;
        for (&id, ov) in &overrides {
            spec.unit_index(id)?;
            ov.validate()?;
            if let Some(b) = ov.weight_blend {
                let base = effective.as_ref().unwrap_or(store);
                let stream = RngStream::new(b.noise_seed, spec.unit_index(id)? as u64);
                effective = Some(blend_weights(base, spec, id, b.t, &stream)?);
            }
        }
        let store = effective.as_ref().unwrap_or(store);

        let mut units = Vec::with_capacity(spec.total_units());
        for id in spec.units() {
            let layout = spec.layout(id)?;
            let p = id.prefix();
            let shortcut = if layout.is_downsampling() {
                Some((
                    conv(store, &format!("{p}.down.conv.weight"), 2)?,
                    bn(store, &format!("{p}.down.bn"))?,
                ))
            } else {
                None
            };
            let alpha = overrides.get(&id).map_or(1.0, |o| o.skip_scale);
            units.push(UnitParams {
                layout,
                conv1: conv(store, &format!("{p}.conv1.weight"), layout.stride)?,
                bn1: bn(store, &format!("{p}.bn1"))?,
                conv2: conv(store, &format!("{p}.conv2.weight"), 1)?,
                bn2: bn(store, &format!("{p}.bn2"))?,
                shortcut,
                skip_scale: T::from_f64(alpha),
            });
        }
        Ok(Self {
            spec: spec.clone(),
            normalization,
            overrides,
            stem_conv: conv(store, "stem.conv.weight", 1)?,
            stem_bn: bn(store, "stem.bn")?,
            units,
            head: HeadParams::new(store.get("head.fc.weight")?.cast(), store.get("head.fc.bias")?.cast())?,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn overrides(&self) -> &Overrides {
        &self.overrides
    }

    pub fn activation(&self) -> Activation {
        self.spec.activation
    }

    pub fn unit_params(&self, id: UnitId) -> Result<&UnitParams<T>> {
        Ok(&self.units[self.spec.unit_index(id)?])
    }

    pub fn stem_params(&self) -> (&ConvParams<T>, &BnParams<T>) {
        (&self.stem_conv, &self.stem_bn)
    }

    pub fn head_params(&self) -> &HeadParams<T> {
        &self.head
    }

    /// Per-channel factor `1 / std`, the derivative of the standardization.
    pub fn input_scale(&self) -> [T; 3] {
        self.normalization.std.map(|s| T::from_f64(1.0 / s))
    }

    pub fn normalize(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        image.ensure_shape(&self.spec.input_shape)?;
        let plane = image.len() / 3;
        let mut out = image.clone();
        for (c, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let (m, s) = (
                T::from_f64(self.normalization.mean[c]),
                T::from_f64(self.normalization.std[c]),
            );
            for v in chunk {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn stem_forward(&self, normalized: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let z = bn_forward(&self.stem_bn, &conv_forward(&self.stem_conv, normalized)?)?;
        Ok(act_forward(&z, self.spec.activation))
    }

    /// Runs one residual unit on `x` and records its internals.
    pub fn unit_forward(&self, id: UnitId, x: &Tensor<T>) -> Result<UnitTrace<T>> {
        let p = self.unit_params(id)?;
        x.ensure_shape(&p.layout.in_shape)?;
        let act = self.spec.activation;
        let z1 = bn_forward(&p.bn1, &conv_forward(&p.conv1, x)?)?;
        let (h, inner_mask) = act_forward(&z1, act);
        let residual = bn_forward(&p.bn2, &conv_forward(&p.conv2, &h)?)?;
        let skip = match &p.shortcut {
            None => x.clone(),
            Some((c, b)) => bn_forward(b, &conv_forward(c, x)?)?,
        };
        let pre_activation = residual.axpy(p.skip_scale, &skip)?;
        let (output, outer_mask) = act_forward(&pre_activation, act);
        Ok(UnitTrace {
            id,
            input: x.clone(),
            residual,
            pre_activation,
            output,
            inner_mask,
            outer_mask,
        })
    }

    /// Full traced forward pass on a pixel-space image.
    pub fn forward(&self, image: &Tensor<T>) -> Result<(Tensor<T>, ActivationTrace<T>)> {
        let normalized = self.normalize(image)?;
        let (stem_output, stem_mask) = self.stem_forward(&normalized)?;
        let mut units = Vec::with_capacity(self.units.len());
        let mut x = stem_output.clone();
        for id in self.spec.units() {
            let t = self.unit_forward(id, &x)?;
            x = t.output.clone();
            units.push(t);
        }
        let logits = head_forward(&self.head, &x)?;
        Ok((
            logits.clone(),
            ActivationTrace {
                image: image.clone(),
                normalized,
                stem_mask,
                stem_output,
                units,
                logits,
            },
        ))
    }

    pub fn logits(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let (mut x, _) = self.stem_forward(&self.normalize(image)?)?;
        for id in self.spec.units() {
            x = self.unit_forward(id, &x)?.output;
        }
        head_forward(&self.head, &x)
    }

    pub fn loss(&self, image: &Tensor<T>, label: usize) -> Result<f64> {
        Ok(softmax_xent(&self.logits(image)?, label)?.0)
    }

    pub fn predict(&self, image: &Tensor<T>) -> Result<usize> {
        Ok(argmax(&self.logits(image)?))
    }
}

pub fn argmax<T: Real>(t: &Tensor<T>) -> usize {
    t.data()
        .iter()
        .enumerate()
        .fold(
            (0, T::neg_infinity()),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        )
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::build_spec;
    use crate::model::weights::init_weights;
    use crate::rng::Distribution;
    use crate::tensor::l2_norm;

    fn tiny(act: Activation) -> NetworkSpec {
        build_spec(1, [4, 8, 16], act).unwrap()
    }

    fn zero_residual_store(spec: &NetworkSpec, seed: u64) -> WeightStore {
        let mut store = init_weights(spec, &RngStream::new(seed, 0));
        let names: Vec<String> = store
            .names()
            .filter(|n| n.starts_with("stage") && (n.ends_with("conv1.weight") || n.ends_with("conv2.weight")))
            .map(String::from)
            .collect();
        for n in names {
            let z = store.get(&n).unwrap().zeros_like();
            store.insert(n, z);
        }
        store
    }

    #[test]
    fn zero_weights_give_bias_logits() {
        let spec = tiny(Activation::Relu);
        let mut store = init_weights(&spec, &RngStream::new(0, 0));
        let names: Vec<String> = store
            .names()
            .filter(|n| n.ends_with("weight"))
            .map(String::from)
            .collect();
        for n in names {
            let z = store.get(&n).unwrap().zeros_like();
            store.insert(n, z);
        }
        store.insert(
            "head.fc.bias",
            Tensor::from_vec(&[10], (0..10).map(|i| i as f32).collect()).unwrap(),
        );
        let net: Network = Network::new(&spec, &store).unwrap();
        let img = RngStream::new(1, 0)
            .sample(&[3, 32, 32], Distribution::Uniform)
            .unwrap()
            .map(|x: f32| x.abs());
        let (logits, trace) = net.forward(&img).unwrap();
        assert_eq!(&logits, store.get("head.fc.bias").unwrap());
        for u in &trace.units {
            assert!(u.residual.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_residual_unit_is_activation_of_shortcut() {
        let spec = tiny(Activation::Relu);
        let store = zero_residual_store(&spec, 2);
        let net: Network = Network::new(&spec, &store).unwrap();
        let img = RngStream::new(1, 0)
            .sample(&[3, 32, 32], Distribution::Uniform)
            .unwrap();
        let (_, trace) = net.forward(&img).unwrap();
        let u = &trace.units[0];
        assert_eq!(u.output, act_forward(&u.input, Activation::Relu).0);
    }

    #[test]
    fn trace_chains_and_shapes() {
        let spec = build_spec(2, [4, 8, 16], Activation::Relu).unwrap();
        let net: Network = Network::new(&spec, &init_weights(&spec, &RngStream::new(3, 0))).unwrap();
        let img = RngStream::new(4, 0)
            .sample(&[3, 32, 32], Distribution::Uniform)
            .unwrap();
        let (_, trace) = net.forward(&img).unwrap();
        assert_eq!(trace.units[0].input, trace.stem_output);
        for w in trace.units.windows(2) {
            assert_eq!(w[0].output, w[1].input);
        }
        for u in &trace.units {
            let l = spec.layout(u.id).unwrap();
            assert_eq!(u.input.shape(), l.in_shape);
            assert_eq!(u.output.shape(), l.out_shape);
            if l.is_downsampling() {
                assert_eq!(l.out_shape[1] * 2, l.in_shape[1]);
                assert_eq!(l.out_shape[2] * 2, l.in_shape[2]);
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = tiny(Activation::Relu);
        let store = init_weights(&spec, &RngStream::new(5, 0));
        let img: Tensor = RngStream::new(6, 0)
            .sample(&[3, 32, 32], Distribution::Uniform)
            .unwrap();
        let a = Network::<f32>::new(&spec, &store).unwrap().forward(&img).unwrap().0;
        let b = Network::<f32>::new(&spec, &store).unwrap().forward(&img).unwrap().0;
        assert_eq!(
            a.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn default_overrides_change_nothing() {
        let spec = tiny(Activation::Relu);
        let store = init_weights(&spec, &RngStream::new(5, 0));
        let img: Tensor = RngStream::new(6, 0)
            .sample(&[3, 32, 32], Distribution::Uniform)
            .unwrap();
        let plain = Network::<f32>::new(&spec, &store).unwrap();
        let mut ov = Overrides::new();
        ov.insert(UnitId::new(2, 0), UnitOverride::default());
        let with = Network::<f32>::with_options(&spec, &store, Normalization::default(), ov).unwrap();
        assert_eq!(plain.forward(&img).unwrap().0, with.forward(&img).unwrap().0);
    }

    #[test]
    fn affine_network_with_identity_activation() {
        let spec = tiny(Activation::Identity);
        let store = zero_residual_store(&spec, 7);
        let net = Network::<f64>::with_options(&spec, &store, Normalization::identity(), Overrides::new()).unwrap();
        let mut rng = RngStream::new(8, 0);
        let x: Tensor<f64> = rng.sample(&[3, 32, 32], Distribution::Uniform).unwrap();
        let y: Tensor<f64> = rng.sample(&[3, 32, 32], Distribution::Uniform).unwrap();
        let (a, b) = (0.3, 1.7);
        let f = |t: &Tensor<f64>| net.logits(t).unwrap();
        let zero = x.zeros_like();
        // f(a x + b y) - f(0) = a (f(x) - f(0)) + b (f(y) - f(0))
        let lhs = f(&x.scale(a).axpy(b, &y).unwrap()).sub(&f(&zero)).unwrap();
        let rhs = f(&x)
            .sub(&f(&zero))
            .unwrap()
            .scale(a)
            .axpy(b, &f(&y).sub(&f(&zero)).unwrap())
            .unwrap();
        let err = l2_norm(&lhs.sub(&rhs).unwrap());
        assert!(err <= 1e-4 * l2_norm(&rhs).max(1.0), "{err}");
    }

    #[test]
    fn blend_override_is_applied() {
        let spec = tiny(Activation::Relu);
        let store = init_weights(&spec, &RngStream::new(5, 0));
        let id = UnitId::new(1, 0);
        let mut ov = Overrides::new();
        ov.insert(id, UnitOverride::blend(0.0, 3));
        let net = Network::<f32>::with_options(&spec, &store, Normalization::default(), ov).unwrap();
        let base = Network::<f32>::new(&spec, &store).unwrap();
        assert_ne!(
            net.unit_params(id).unwrap().conv1.kernel(),
            base.unit_params(id).unwrap().conv1.kernel()
        );
        let mut ov = Overrides::new();
        ov.insert(id, UnitOverride::blend(1.0, 3));
        let same = Network::<f32>::with_options(&spec, &store, Normalization::default(), ov).unwrap();
        assert_eq!(
            same.unit_params(id).unwrap().conv1.kernel(),
            base.unit_params(id).unwrap().conv1.kernel()
        );
    }

    #[test]
    fn wrong_input_shape() {
        let spec = tiny(Activation::Relu);
        let net: Network = Network::new(&spec, &init_weights(&spec, &RngStream::new(0, 0))).unwrap();
        assert!(net.forward(&Tensor::zeros(&[3, 16, 16]).unwrap()).is_err());
    }
}
