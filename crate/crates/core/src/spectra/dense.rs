//! Dense SVD, backed by faer's bidiagonalization + divide-and-conquer.

use faer::Mat;

use crate::error::{Error, Result};
use crate::jacobian::{materialize, DenseMatrix, LinearOperator};
use crate::spectra::spectrum::{Spectrum, SpectrumMethod};

fn to_faer(m: &DenseMatrix) -> Result<Mat<f64>> {
    for i in 0..m.rows() {
        if let Some(j) = m.row(i).iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { row: i, col: j });
        }
    }
    Ok(Mat::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j)))
}

fn columns(m: faer::MatRef<'_, f64>) -> Vec<Vec<f64>> {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)]).collect())
        .collect()
}

/// Thin SVD `M = U diag(s) V^T` with `min(rows, cols)` triplets.
pub fn dense_svd(m: &DenseMatrix) -> Result<Spectrum> {
    let svd = to_faer(m)?.thin_svd().map_err(|_| Error::SvdFailed)?;
    let s = svd.S().column_vector();
    let r = s.nrows();
    Ok(Spectrum {
        singular_values: (0..r).map(|i| s[i]).collect(),
        right_vectors: Some(columns(svd.V())),
        left_vectors: Some(columns(svd.U())),
        method: SpectrumMethod::Dense,
        label: "dense".into(),
        k_requested: r,
        converged_count: r,
        complete: true,
    })
}

/// Singular values only; much cheaper than [`dense_svd`] for large matrices.
pub fn dense_singular_values(m: &DenseMatrix) -> Result<Spectrum> {
    let s = to_faer(m)?.singular_values().map_err(|_| Error::SvdFailed)?;
    let r = s.len();
    Ok(Spectrum {
        singular_values: s,
        right_vectors: None,
        left_vectors: None,
        method: SpectrumMethod::Dense,
        label: "dense".into(),
        k_requested: r,
        converged_count: r,
        complete: true,
    })
}

/// All singular values of `op` by materialization and dense SVD.
/// Fails with [`Error::CapExceeded`] above `cap`.
pub fn full_spectrum(op: &dyn LinearOperator, cap: usize, with_vectors: bool) -> Result<Spectrum> {
    let m = materialize(op, cap)?;
    let s = if with_vectors {
        dense_svd(&m)?
    } else {
        dense_singular_values(&m)?
    };
    Ok(s.with_label(op.describe()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Distribution, RngStream};

    #[test]
    fn diagonal_values() {
        let m = DenseMatrix::from_fn(3, 3, |i, j| if i == j { 3.0 - i as f64 } else { 0.0 });
        let s = dense_svd(&m).unwrap();
        assert_eq!(s.len(), 3);
        for (a, b) in s.singular_values.iter().zip([3.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn nilpotent() {
        let m = DenseMatrix::from_row_major(2, 2, vec![0.0, 2.0, 0.0, 0.0]).unwrap();
        let s = dense_svd(&m).unwrap().singular_values;
        assert!((s[0] - 2.0).abs() < 1e-14 && s[1].abs() < 1e-14);
    }

    #[test]
    fn non_finite_rejected() {
        let m = DenseMatrix::from_row_major(2, 2, vec![0.0, f64::NAN, 0.0, 0.0]).unwrap();
        assert!(matches!(dense_svd(&m), Err(Error::NonFinite { row: 0, col: 1 })));
    }

    #[test]
    fn reconstruction() {
        let mut rng = RngStream::new(1, 0);
        let m = DenseMatrix::from_row_major(20, 12, rng.sample_vec(240, Distribution::Gaussian)).unwrap();
        let s = dense_svd(&m).unwrap();
        let (u, v) = (s.left_vectors.as_ref().unwrap(), s.right_vectors.as_ref().unwrap());
        let rec = DenseMatrix::from_fn(20, 12, |i, j| {
            (0..12).map(|k| u[k][i] * s.singular_values[k] * v[k][j]).sum()
        });
        let diff = DenseMatrix::from_fn(20, 12, |i, j| rec.get(i, j) - m.get(i, j));
        assert!(diff.frobenius_norm() <= 1e-4 * m.frobenius_norm());
        assert!(s.right_orthonormality_error().unwrap() < 1e-6);
        let only = dense_singular_values(&m).unwrap();
        for (a, b) in only.singular_values.iter().zip(&s.singular_values) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
