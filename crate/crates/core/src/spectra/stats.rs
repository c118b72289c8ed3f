use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectra::spectrum::Spectrum;
use crate::tensor::dot;

pub const PLATEAU_LO: f64 = 0.99;
pub const PLATEAU_HI: f64 = 1.01;
/// Zero band threshold relative to the leading singular value.
pub const DEFAULT_ZERO_TOL_REL: f64 = 1e-6;
pub const HISTOGRAM_BIN_WIDTH: f64 = 0.01;

/// Counts of singular values in the four bands
/// `(1.01, inf)`, `[0.99, 1.01]`, `(zero_tol, 0.99)` and `[0, zero_tol]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinCounts {
    pub n_above: usize,
    pub n_plateau: usize,
    pub n_mid: usize,
    pub n_zero: usize,
    pub zero_tol: f64,
    /// Counts come from a partial spectrum and are lower bounds.
    pub lower_bound: bool,
}

impl BinCounts {
    pub fn total(&self) -> usize {
        self.n_above + self.n_plateau + self.n_mid + self.n_zero
    }
}

/// `zero_tol` defaults to `1e-6 * sigma_1`.
pub fn bin_spectrum(spec: &Spectrum, zero_tol: Option<f64>) -> BinCounts {
    bin_values(&spec.singular_values, zero_tol, !spec.complete)
}

pub fn bin_values(values: &[f64], zero_tol: Option<f64>, lower_bound: bool) -> BinCounts {
    let s1 = values.iter().copied().fold(0.0, f64::max);
    let zero_tol = zero_tol.unwrap_or(DEFAULT_ZERO_TOL_REL * s1);
    let mut c = BinCounts {
        n_above: 0,
        n_plateau: 0,
        n_mid: 0,
        n_zero: 0,
        zero_tol,
        lower_bound,
    };
    for &s in values {
        if s > PLATEAU_HI {
            c.n_above += 1;
        } else if s >= PLATEAU_LO {
            c.n_plateau += 1;
        } else if s > zero_tol {
            c.n_mid += 1;
        } else {
            c.n_zero += 1;
        }
    }
    c
}

/// Fraction of values inside the plateau band.
pub fn plateau_fraction(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values
        .iter()
        .filter(|&&s| (PLATEAU_LO..=PLATEAU_HI).contains(&s))
        .count();
    n as f64 / values.len() as f64
}

/// `alpha_i = <delta, v_i>` for every stored right vector.
pub fn project_coefficients(delta: &[f64], spec: &Spectrum) -> Result<Vec<f64>> {
    let v = spec
        .right_vectors
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("spectrum '{}' has no right singular vectors", spec.label)))?;
    if let Some(first) = v.first() {
        if first.len() != delta.len() {
            return Err(Error::shape(&[first.len()], &[delta.len()]));
        }
    }
    Ok(v.iter().map(|vi| dot(delta, vi)).collect())
}

/// `sqrt(sum alpha_k^2 sigma_k^2)`: the norm of `J delta` when `delta` lies in
/// the span of the right vectors.
pub fn predict_growth(alpha: &[f64], sigma: &[f64]) -> Result<f64> {
    if alpha.len() != sigma.len() {
        return Err(Error::shape(&[sigma.len()], &[alpha.len()]));
    }
    Ok(alpha
        .iter()
        .zip(sigma)
        .map(|(a, s)| (a * s).powi(2))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Fixed-width histogram on `[0, max(values)]`; the last bin is closed.
pub fn histogram(values: &[f64], width: f64) -> Vec<HistogramBin> {
    histogram_to(values, width, values.iter().copied().fold(0.0, f64::max))
}

/// Fixed-width histogram on `[0, max]`; values above `max` land in the last bin.
pub fn histogram_to(values: &[f64], width: f64, max: f64) -> Vec<HistogramBin> {
    let n_bins = ((max / width).floor() as usize + 1).max(1);
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        let b = ((v.max(0.0) / width).floor() as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lo: i as f64 * width,
            hi: (i + 1) as f64 * width,
            count,
        })
        .collect()
}

/// Center of the most populated histogram bin; ties go to the lower bin.
pub fn histogram_mode(values: &[f64], width: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let bins = histogram(values, width);
    let best = bins.iter().fold(&bins[0], |b, x| if x.count > b.count { x } else { b });
    Some(0.5 * (best.lo + best.hi))
}

/// Location of the plateau: the histogram mode of the values above the zero
/// band. Zero singular values from inactive ReLU outputs are excluded, since
/// they can outnumber the plateau itself.
pub fn plateau_value(values: &[f64], zero_tol: Option<f64>) -> Option<f64> {
    let s1 = values.iter().copied().fold(0.0, f64::max);
    let zero_tol = zero_tol.unwrap_or(DEFAULT_ZERO_TOL_REL * s1);
    let nonzero: Vec<f64> = values.iter().copied().filter(|&s| s > zero_tol).collect();
    histogram_mode(&nonzero, HISTOGRAM_BIN_WIDTH)
}
