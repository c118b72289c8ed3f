//! Input perturbations and how they travel through the network.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobian::input_gradient;
use crate::model::{ActivationTrace, Network, UnitId, UnitTrace};
use crate::rng::{Distribution, RngStream};
use crate::spectra::{predict_growth, Spectrum};
use crate::tensor::{dot, norm, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Random,
    Adversarial,
}

impl FromStr for PerturbationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "adversarial" => Ok(Self::Adversarial),
            _ => Err(Error::InvalidArgument(format!("unknown perturbation kind '{s}'"))),
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Adversarial => "adversarial",
        })
    }
}

/// Single-step fast gradient sign perturbation in pixel units:
/// `clip(image + eps * sign(grad), 0, 1) - image`.
pub fn fgsm<T: Real>(net: &Network<T>, image: &Tensor<T>, label: usize, eps: f64) -> Result<Tensor<T>> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be non-negative, got {eps}")));
    }
    if eps == 0.0 {
        image.ensure_shape(&net.spec().input_shape)?;
        return Ok(image.zeros_like());
    }
    let g = input_gradient(net, image, label)?;
    let eps = T::from_f64(eps);
    let (zero, one) = (T::zero(), T::one());
    let data = image
        .data()
        .iter()
        .zip(g.data())
        .map(|(&x, &d)| {
            let step = if d > zero {
                eps
            } else if d < zero {
                -eps
            } else {
                zero
            };
            (x + step).max(zero).min(one) - x
        })
        .collect();
    Tensor::from_vec(image.shape(), data)
}

/// Uniform `(-1, 1)` noise rescaled to L2 norm `target_norm`.
pub fn random_matched<T: Real>(shape: &[usize], target_norm: f64, stream: &mut RngStream) -> Result<Tensor<T>> {
    if !(target_norm >= 0.0) || !target_norm.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "target norm must be finite and non-negative, got {target_norm}"
        )));
    }
    let zeros = Tensor::<T>::zeros(shape)?;
    if target_norm == 0.0 {
        return Ok(zeros);
    }
    let x = stream.sample_vec(zeros.len(), Distribution::Uniform);
    let n = norm(&x);
    let scaled: Vec<f64> = x.iter().map(|v| v * target_norm / n).collect();
    Tensor::from_f64_slice(shape, &scaled)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitDifference {
    pub id: UnitId,
    /// `||x~_k - x_k||`
    pub raw_norm: f64,
    /// `raw_norm / sqrt(map element count)`
    pub normalized_norm: f64,
}

/// Differences between clean and perturbed unit outputs, in unit order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationTrace {
    pub kind: Option<PerturbationKind>,
    pub image_id: Option<usize>,
    pub eps: Option<f64>,
    /// `||delta x_0||` in pixel space.
    pub input_norm: f64,
    pub units: Vec<UnitDifference>,
}

impl PerturbationTrace {
    pub fn labeled(mut self, kind: PerturbationKind, image_id: usize, eps: f64) -> Self {
        self.kind = Some(kind);
        self.image_id = Some(image_id);
        self.eps = Some(eps);
        self
    }
}

fn diff_norm<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Runs clean and perturbed passes and records per-unit output differences.
pub fn propagate<T: Real>(net: &Network<T>, image: &Tensor<T>, delta: &Tensor<T>) -> Result<PerturbationTrace> {
    let (_, clean) = net.forward(image)?;
    propagate_from(net, &clean, delta)
}

/// Same as [`propagate`], reusing an existing clean trace.
pub fn propagate_from<T: Real>(
    net: &Network<T>,
    clean: &ActivationTrace<T>,
    delta: &Tensor<T>,
) -> Result<PerturbationTrace> {
    let (_, perturbed) = net.forward(&clean.image.add(delta)?)?;
    let units = clean
        .units
        .iter()
        .zip(&perturbed.units)
        .map(|(c, p)| {
            let raw = diff_norm(&p.output, &c.output);
            UnitDifference {
                id: c.id,
                raw_norm: raw,
                normalized_norm: raw / (c.output.len() as f64).sqrt(),
            }
        })
        .collect();
    Ok(PerturbationTrace {
        kind: None,
        image_id: None,
        eps: None,
        input_norm: crate::tensor::l2_norm(delta),
        units,
    })
}

/// Predicted and actual growth of a difference through one unit, both
/// relative to the incoming norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthRow {
    pub id: UnitId,
    pub input_norm: f64,
    /// `sqrt(sum alpha_k^2 sigma_k^2) / ||delta_in||` over the retained modes.
    pub predicted: f64,
    /// `||delta_out|| / ||delta_in||` from the nonlinear unit.
    pub actual: f64,
    /// `sqrt(||delta_in||^2 - sum alpha_k^2) / ||delta_in||`, the share of the
    /// incoming difference outside the retained modes.
    pub residual_mass: f64,
    pub modes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthTable {
    pub stage: usize,
    pub rows: Vec<GrowthRow>,
}

fn right_vectors(spec: &Spectrum) -> Result<&[Vec<f64>]> {
    spec.right_vectors
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("spectrum '{}' has no right singular vectors", spec.label)))
}

/// Growth of `delta_in` through the unit recorded in `clean`, predicted from
/// `spectrum` (linearized at `clean`) and measured by re-running the unit.
pub fn unit_growth<T: Real>(
    net: &Network<T>,
    clean: &UnitTrace<T>,
    delta_in: &Tensor<T>,
    spectrum: &Spectrum,
    k_modes: Option<usize>,
) -> Result<GrowthRow> {
    let perturbed = net.unit_forward(clean.id, &clean.input.add(delta_in)?)?;
    growth_between(clean, &perturbed, spectrum, k_modes)
}

/// Growth row for a unit from its clean and perturbed traces, using the
/// leading `k_modes` (default all) stored modes of `spectrum`.
pub fn growth_between<T: Real>(
    clean: &UnitTrace<T>,
    perturbed: &UnitTrace<T>,
    spectrum: &Spectrum,
    k_modes: Option<usize>,
) -> Result<GrowthRow> {
    let v = right_vectors(spectrum)?;
    let k = k_modes.unwrap_or(v.len()).min(v.len());
    let d_in: Vec<f64> = perturbed
        .input
        .data()
        .iter()
        .zip(clean.input.data())
        .map(|(a, b)| a.as_f64() - b.as_f64())
        .collect();
    let n_in = norm(&d_in);
    if let Some(first) = v.first() {
        if first.len() != d_in.len() {
            return Err(Error::shape(&[first.len()], &[d_in.len()]));
        }
    }
    let sigma = &spectrum.singular_values[..k];
    let alpha: Vec<f64> = v[..k].iter().map(|vi| dot(&d_in, vi)).collect();
    let captured: f64 = alpha.iter().map(|a| a * a).sum();
    let n_out = diff_norm(&perturbed.output, &clean.output);
    let rel = |x: f64| if n_in > 0.0 { x / n_in } else { 0.0 };
    Ok(GrowthRow {
        id: clean.id,
        input_norm: n_in,
        predicted: rel(predict_growth(&alpha, sigma)?),
        actual: rel(n_out),
        residual_mass: rel((n_in * n_in - captured).max(0.0).sqrt()),
        modes: k,
    })
}

/// Growth table for every unit of `stage` when the pixel-space perturbation
/// `delta` is applied to `clean.image`. `spectra[u]` must be the spectrum of
/// unit `u` of that stage at the clean trace, with right vectors.
pub fn growth_table<T: Real>(
    net: &Network<T>,
    clean: &ActivationTrace<T>,
    delta: &Tensor<T>,
    stage: usize,
    spectra: &[Spectrum],
    k_modes: Option<usize>,
) -> Result<GrowthTable> {
    let n = net.spec().units_per_stage;
    if spectra.len() != n {
        return Err(Error::InvalidArgument(format!(
            "stage {stage} has {n} units but {} spectra were supplied",
            spectra.len()
        )));
    }
    let (_, perturbed) = net.forward(&clean.image.add(delta)?)?;
    let mut rows = Vec::with_capacity(n);
    for (u, spec) in spectra.iter().enumerate() {
        let id = UnitId::new(stage, u);
        rows.push(growth_between(clean.unit(id)?, perturbed.unit(id)?, spec, k_modes)?);
    }
    Ok(GrowthTable { stage, rows })
}
