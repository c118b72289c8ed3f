use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jacobian::operator::LinearOperator;

/// Default bound on the input dimension of operators that may be
/// materialized: one stage-1 activation map of a standard CIFAR ResNet
/// (16 x 32 x 32).
pub const DEFAULT_MATERIALIZE_CAP: usize = 16_384;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(&[rows, cols], &[data.len()]));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matvec_transpose(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &ui) in u.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * ui;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn unit_vector(n: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[j] = 1.0;
    e
}

/// Dense `out_dim x in_dim` matrix whose column `j` is `apply(e_j)`.
/// Columns are probed in parallel; each column is computed independently so
/// the result does not depend on scheduling.
pub fn materialize(op: &dyn LinearOperator, cap: usize) -> Result<DenseMatrix> {
    let (n, m) = (op.in_dim(), op.out_dim());
    if n > cap {
        return Err(Error::CapExceeded { dim: n, cap });
    }
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| op.apply(&unit_vector(n, j)))
        .collect::<Result<_>>()?;
    let mut out = DenseMatrix::zeros(m, n);
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Dense matrix of the operator built from `apply_transpose`: row `i` is
/// `apply_transpose(e_i)`. Agrees with [`materialize`] when the transpose is
/// implemented correctly.
pub fn materialize_transpose(op: &dyn LinearOperator, cap: usize) -> Result<DenseMatrix> {
    let (n, m) = (op.in_dim(), op.out_dim());
    if n > cap {
        return Err(Error::CapExceeded { dim: n, cap });
    }
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| op.apply_transpose(&unit_vector(m, i)))
        .collect::<Result<_>>()?;
    DenseMatrix::from_row_major(m, n, rows.concat())
}
