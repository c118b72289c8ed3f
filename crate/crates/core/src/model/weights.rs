use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::spec::{NetworkSpec, UnitId};
use crate::rng::{Distribution, RngStream};
use crate::tensor::{l2_norm, Tensor};

/// Named parameter tensors, keyed by canonical name. Iteration order is the
/// sorted name order, which is also the NTW1 entry order on save.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightStore {
    tensors: BTreeMap<String, Tensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), tensor)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::WeightMismatch(format!("missing tensor `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::WeightMismatch(format!("missing tensor `{name}`")))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Checks that the store holds exactly the tensors `spec` needs.
    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        let wanted = spec.tensor_shapes();
        for (name, shape) in &wanted {
            let t = self.get(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::WeightMismatch(format!(
                    "`{name}` has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        if self.tensors.len() != wanted.len() {
            let extra: Vec<_> = self
                .tensors
                .keys()
                .filter(|k| !wanted.iter().any(|(n, _)| n == *k))
                .cloned()
                .collect();
            return Err(Error::WeightMismatch(format!("unexpected tensors {extra:?}")));
        }
        for (name, _) in wanted.iter().filter(|(n, _)| n.ends_with(".var")) {
            if self.tensors[name].data().iter().any(|&v| v < 0.0) {
                return Err(Error::WeightMismatch(format!("`{name}` has negative entries")));
            }
        }
        Ok(())
    }

    /// Kernel names of one unit: conv1, conv2 and the projection shortcut when
    /// present.
    pub fn unit_kernel_names(spec: &NetworkSpec, unit: UnitId) -> Result<Vec<String>> {
        let layout = spec.layout(unit)?;
        let p = unit.prefix();
        let mut names = vec![format!("{p}.conv1.weight"), format!("{p}.conv2.weight")];
        if layout.is_downsampling() {
            names.push(format!("{p}.down.conv.weight"));
        }
        Ok(names)
    }
}

/// Synthetic weights: He-scaled Gaussian kernels `N(0, 2 / fan_in)`, BN at
/// identity (`gamma = 1, beta = 0, mean = 0, var = 1`), fc `N(0, 1 / C)` with
/// zero bias.
pub fn init_weights(spec: &NetworkSpec, stream: &RngStream) -> WeightStore {
    let mut rng = RngStream::new(stream.seed(), stream.stream_id());
    let mut store = WeightStore::new();
    for (name, shape) in spec.tensor_shapes() {
        let t =
            if name.ends_with("conv.weight") || name.ends_with(".conv1.weight") || name.ends_with(".conv2.weight") {
                let fan_in: usize = shape[1..].iter().product();
                let std = (2.0 / fan_in as f64).sqrt();
                let data = rng.sample_vec(shape.iter().product(), Distribution::Gaussian);
                Tensor::from_f64_slice(&shape, &data.iter().map(|x| x * std).collect::<Vec<_>>())
            } else if name == "head.fc.weight" {
                let std = (1.0 / shape[1] as f64).sqrt();
                let data = rng.sample_vec(shape.iter().product(), Distribution::Gaussian);
                Tensor::from_f64_slice(&shape, &data.iter().map(|x| x * std).collect::<Vec<_>>())
            } else if name.ends_with(".gamma") || name.ends_with(".var") {
                Tensor::full(&shape, 1.0)
            } else {
                Tensor::zeros(&shape)
            }
            .expect("spec shapes are valid");
        store.insert(name, t);
    }
    store
}

/// Replaces each convolution kernel `w` of `unit` by `t w + (1 - t) eta`, where
/// `eta` is Gaussian noise rescaled to `||eta|| = ||w||` per kernel tensor.
/// Noise is drawn from `stream` in the order conv1, conv2, down.conv, so the
/// same stream yields the same `eta` for every `t`. BN parameters are left
/// untouched.
pub fn blend_weights(
    store: &WeightStore,
    spec: &NetworkSpec,
    unit: UnitId,
    t: f64,
    stream: &RngStream,
) -> Result<WeightStore> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("blend t = {t} outside [0, 1]")));
    }
    let mut out = store.clone();
    let mut rng = RngStream::new(stream.seed(), stream.stream_id());
    for name in WeightStore::unit_kernel_names(spec, unit)? {
        let theta = store.get(&name)?;
        let eta = rng.sample_vec(theta.len(), Distribution::Gaussian);
        if t == 1.0 {
            continue;
        }
        let eta_norm = eta.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = if eta_norm > 0.0 { l2_norm(theta) / eta_norm } else { 0.0 };
        let blended: Vec<f64> = theta
            .data()
            .iter()
            .zip(&eta)
            .map(|(&w, &e)| t * w as f64 + (1.0 - t) * scale * e)
            .collect();
        *out.get_mut(&name)? = Tensor::from_f64_slice(theta.shape(), &blended)?;
    }
    Ok(out)
}
