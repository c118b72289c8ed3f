//! Golub-Kahan-Lanczos bidiagonalization with full reorthogonalization.
//!
//! Builds orthonormal bases `V` (input side) and `U` (output side) with
//! `A V = U B` and `A^T U = V B^T + beta_j v_{j+1} e_j^T`, `B` upper bidiagonal.
//! Ritz triplets of `B` approximate the leading singular triplets of `A`; the
//! residual of triplet `i` is `beta_j |P[j, i]|` where `B = P S Q^T`.

use faer::Mat;

use crate::error::{Error, Result};
use crate::jacobian::LinearOperator;
use crate::rng::{Distribution, RngStream};
use crate::spectra::spectrum::{Spectrum, SpectrumMethod};
use crate::tensor::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosOptions {
    pub k: usize,
    /// Upper bound on the Krylov dimension; clamped to `min(in_dim, out_dim)`.
    pub max_iter: usize,
    /// Relative residual tolerance, scaled by the leading singular value.
    pub tol: f64,
}

impl LanczosOptions {
    pub fn new(k: usize, tol: f64) -> Self {
        Self {
            k,
            max_iter: (10 * k).max(k + 100),
            tol,
        }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

const BREAKDOWN: f64 = 1e-12;

/// Two passes of classical Gram-Schmidt against `basis`.
fn orthogonalize(x: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(x, b);
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi -= c * bi;
            }
        }
    }
}

/// A unit vector orthogonal to `basis`, or `None` when the basis already
/// spans the space.
fn fresh_direction(dim: usize, basis: &[Vec<f64>], rng: &mut RngStream) -> Option<Vec<f64>> {
    if basis.len() >= dim {
        return None;
    }
    for _ in 0..3 {
        let mut x = rng.sample_vec(dim, Distribution::Gaussian);
        let n0 = norm(&x);
        orthogonalize(&mut x, basis);
        let n = norm(&x);
        if n > 1e-8 * n0 {
            x.iter_mut().for_each(|v| *v /= n);
            return Some(x);
        }
    }
    None
}

struct SmallSvd {
    s: Vec<f64>,
    p: Mat<f64>,
    q: Mat<f64>,
}

fn bidiagonal_svd(alpha: &[f64], beta: &[f64]) -> Result<SmallSvd> {
    let j = alpha.len();
    let b = Mat::from_fn(j, j, |r, c| {
        if r == c {
            alpha[r]
        } else if c == r + 1 {
            beta[r]
        } else {
            0.0
        }
    });
    let svd = b.thin_svd().map_err(|_| Error::SvdFailed)?;
    let s = svd.S().column_vector();
    Ok(SmallSvd {
        s: (0..j).map(|i| s[i]).collect(),
        p: svd.U().to_owned(),
        q: svd.V().to_owned(),
    })
}

/// Leading `k` singular triplets of `op`.
///
/// Convergence is judged on the Ritz residual estimate and then verified
/// explicitly; `converged_count` counts triplets whose explicit residuals
/// `||A v - s u||` and `||A^T u - s v||` are both within `tol * s_1`. Running out
/// of iterations yields a partial result, not an error.
pub fn lanczos_topk(op: &dyn LinearOperator, opts: LanczosOptions, rng: &mut RngStream) -> Result<Spectrum> {
    let (n, m) = (op.in_dim(), op.out_dim());
    let kmax = n.min(m);
    if opts.k == 0 || opts.k > kmax {
        return Err(Error::InvalidArgument(format!(
            "k = {} must lie in 1..={kmax} for a {m}x{n} operator",
            opts.k
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let limit = opts.max_iter.max(opts.k).min(kmax);

    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(limit + 1);
    let mut us: Vec<Vec<f64>> = Vec::with_capacity(limit);
    let mut alpha = Vec::with_capacity(limit);
    let mut beta: Vec<f64> = Vec::with_capacity(limit);
    let mut scale: f64 = 0.0;

    vs.push(fresh_direction(n, &[], rng).ok_or_else(|| Error::InvalidArgument("empty operator".into()))?);
    let mut small = None;
    for j in 0..limit {
        let mut u = op.apply(&vs[j])?;
        if j > 0 {
            let b = beta[j - 1];
            for (ui, pi) in u.iter_mut().zip(&us[j - 1]) {
                *ui -= b * pi;
            }
        }
        orthogonalize(&mut u, &us);
        let mut a = norm(&u);
        scale = scale.max(a);
        if a <= BREAKDOWN * scale.max(f64::MIN_POSITIVE) {
            a = 0.0;
            u = match fresh_direction(m, &us, rng) {
                Some(x) => x,
                None => break,
            };
        } else {
            u.iter_mut().for_each(|x| *x /= a);
        }
        alpha.push(a);

        let mut w = op.apply_transpose(&u)?;
        for (wi, vi) in w.iter_mut().zip(&vs[j]) {
            *wi -= a * vi;
        }
        us.push(u);
        orthogonalize(&mut w, &vs);
        let mut b = norm(&w);
        scale = scale.max(b);
        let exhausted = j + 1 == limit;
        let next_v = if b <= BREAKDOWN * scale.max(f64::MIN_POSITIVE) {
            b = 0.0;
            if exhausted {
                None
            } else {
                fresh_direction(n, &vs, rng)
            }
        } else {
            Some(w.iter().map(|x| x / b).collect::<Vec<_>>())
        };
        beta.push(b);

        let dim = j + 1;
        let check = dim >= opts.k && (dim <= 64 || dim % 8 == 0 || exhausted || next_v.is_none());
        if check {
            let svd = bidiagonal_svd(&alpha, &beta[..dim - 1])?;
            let s1 = svd.s[0];
            let done = (0..opts.k).all(|i| b * svd.p[(dim - 1, i)].abs() <= opts.tol * s1);
            small = Some(svd);
            if done {
                break;
            }
        }
        match next_v {
            Some(v) => vs.push(v),
            None => break,
        }
    }

    let dim = alpha.len();
    let svd = match small {
        Some(s) if s.s.len() == dim => s,
        _ => bidiagonal_svd(&alpha, &beta[..dim.saturating_sub(1)])?,
    };
    let k = opts.k.min(dim);
    let mut values = Vec::with_capacity(k);
    let mut right = Vec::with_capacity(k);
    let mut left = Vec::with_capacity(k);
    for i in 0..k {
        let mut v = vec![0.0; n];
        let mut u = vec![0.0; m];
        for (r, basis) in vs.iter().take(dim).enumerate() {
            let c = svd.q[(r, i)];
            v.iter_mut().zip(basis).for_each(|(x, b)| *x += c * b);
        }
        for (r, basis) in us.iter().enumerate() {
            let c = svd.p[(r, i)];
            u.iter_mut().zip(basis).for_each(|(x, b)| *x += c * b);
        }
        values.push(svd.s[i]);
        right.push(v);
        left.push(u);
    }

    let s1 = values.first().copied().unwrap_or(0.0);
    let mut converged = 0;
    for i in 0..k {
        let av = op.apply(&right[i])?;
        let atu = op.apply_transpose(&left[i])?;
        let r1: f64 = av.iter().zip(&left[i]).map(|(a, u)| (a - values[i] * u).powi(2)).sum();
        let r2: f64 = atu
            .iter()
            .zip(&right[i])
            .map(|(a, v)| (a - values[i] * v).powi(2))
            .sum();
        if r1.sqrt() <= opts.tol * s1 && r2.sqrt() <= opts.tol * s1 {
            converged += 1;
        } else {
            break;
        }
    }

    Ok(Spectrum {
        singular_values: values,
        right_vectors: Some(right),
        left_vectors: Some(left),
        method: SpectrumMethod::Lanczos,
        label: op.describe(),
        k_requested: opts.k,
        converged_count: converged,
        complete: k == kmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jacobian::{DenseMatrix, IdentityOperator, MatrixOperator};
    use crate::spectra::dense_singular_values;

    #[test]
    fn identity_top_values() {
        let op = IdentityOperator::new(&[100]);
        let mut rng = RngStream::new(3, 0);
        let s = lanczos_topk(&op, LanczosOptions::new(5, 1e-10), &mut rng).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.singular_values.iter().all(|x| (x - 1.0).abs() <= 1e-10));
        assert_eq!(s.converged_count, 5);
    }

    #[test]
    fn random_square_matches_dense() {
        let mut rng = RngStream::new(4, 0);
        let m = DenseMatrix::from_row_major(64, 64, rng.sample_vec(64 * 64, Distribution::Gaussian)).unwrap();
        let dense = dense_singular_values(&m).unwrap();
        let op = MatrixOperator::new(m);
        let s = lanczos_topk(&op, LanczosOptions::new(10, 1e-10).with_max_iter(64), &mut rng).unwrap();
        for (a, b) in s.singular_values.iter().zip(&dense.singular_values) {
            assert!((a - b).abs() <= 1e-8 * dense.largest(), "{a} vs {b}");
        }
    }

    #[test]
    fn close_pair_resolved() {
        let d: Vec<f64> = [10.0, 9.99]
            .into_iter()
            .chain((0..48).map(|i| 5.0 - 0.1 * i as f64))
            .collect();
        let m = DenseMatrix::from_fn(50, 50, |i, j| if i == j { d[i] } else { 0.0 });
        let op = MatrixOperator::new(m);
        let mut rng = RngStream::new(5, 0);
        let s = lanczos_topk(&op, LanczosOptions::new(2, 1e-10), &mut rng).unwrap();
        assert!((s.singular_values[0] - 10.0).abs() < 1e-8);
        assert!((s.singular_values[1] - 9.99).abs() < 1e-8);
    }

    #[test]
    fn rectangular_and_rank_deficient() {
        let mut rng = RngStream::new(6, 0);
        // rank 3, 30 x 20
        let a = rng.sample_vec(30 * 3, Distribution::Gaussian);
        let b = rng.sample_vec(3 * 20, Distribution::Gaussian);
        let m = DenseMatrix::from_fn(30, 20, |i, j| (0..3).map(|r| a[i * 3 + r] * b[r * 20 + j]).sum());
        let dense = dense_singular_values(&m).unwrap();
        let op = MatrixOperator::new(m);
        let s = lanczos_topk(&op, LanczosOptions::new(5, 1e-10), &mut rng).unwrap();
        for i in 0..5 {
            assert!((s.singular_values[i] - dense.singular_values[i]).abs() <= 1e-8 * dense.largest());
        }
    }

    #[test]
    fn bad_k_rejected() {
        let op = IdentityOperator::new(&[4]);
        let mut rng = RngStream::new(0, 0);
        assert!(lanczos_topk(&op, LanczosOptions::new(5, 1e-8), &mut rng).is_err());
        assert!(lanczos_topk(&op, LanczosOptions::new(0, 1e-8), &mut rng).is_err());
    }
}
