use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumMethod {
    Dense,
    Lanczos,
}

/// Singular values of an operator, optionally with singular vectors.
///
/// Values are sorted in non-increasing order. `right_vectors[i]` (length
/// `in_dim`) and `left_vectors[i]` (length `out_dim`) pair with
/// `singular_values[i]`. Vectors of a degenerate cluster form an arbitrary
/// orthonormal basis of that cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub singular_values: Vec<f64>,
    pub right_vectors: Option<Vec<Vec<f64>>>,
    pub left_vectors: Option<Vec<Vec<f64>>>,
    pub method: SpectrumMethod,
    pub label: String,
    pub k_requested: usize,
    pub converged_count: usize,
    /// Every singular value of the operator is present.
    pub complete: bool,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Largest `|V^T V - I|` entry over the stored right vectors.
    pub fn right_orthonormality_error(&self) -> Option<f64> {
        let v = self.right_vectors.as_ref()?;
        let mut worst: f64 = 0.0;
        for i in 0..v.len() {
            for j in i..v.len() {
                let g: f64 = v[i].iter().zip(&v[j]).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        Some(worst)
    }
}
